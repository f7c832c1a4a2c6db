//! Simulator for a temporal delayed-choice experiment in which two quantum
//! memories act as the beam splitters of a Mach-Zehnder interferometer.
//!
//! - [`model`]: apparatus description and validation
//! - [`evolution`]: analytic amplitude chain, fringes and visibility
//! - [`temporal`]: retrieved-packet envelopes, mode overlap, decoherence
//! - [`montecarlo`]: seeded trial-level simulation
//! - [`analysis`]: sinusoid and decay fits, visibility extraction
//! - [`scenarios`]: the named data sets and their file output

pub mod analysis;
mod error;
pub mod evolution;
pub mod model;
pub mod montecarlo;
pub mod scenarios;
pub mod temporal;

pub use error::{Error, Result};
pub use evolution::{FringeScan, Interferometer};
pub use model::InterferometerConfig;
