use std::path::PathBuf;

use thiserror::Error;

use crate::analysis::FitError;
use crate::model::ValidationError;
use crate::temporal::QuadratureError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Validation(#[from] ValidationError),

    #[error(transparent)]
    Quadrature(#[from] QuadratureError),

    #[error(transparent)]
    Fit(#[from] FitError),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable category, used by the CLI for its error line
    /// and exit code.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Quadrature(_) => "quadrature",
            Error::Fit(_) => "fit",
            Error::InvalidInput(_) => "input",
            Error::Config(_) => "config",
            Error::UnknownScenario(_) => "scenario",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
