//! TOML run files.
//!
//! A run file names a scenario in a `[run]` table and may override any
//! apparatus field at the top level. Overrides are merged onto the
//! scenario's preset config, so a file only lists what it changes:
//!
//! ```toml
//! eom_phase = 0.0
//!
//! [run]
//! scenario = "fig3"
//! engine = "both"
//! trials = 20000
//! seed = 7
//!
//! [run.sweep]
//! parameter = "eta2"
//! values = [0.331, 0.1, 0.0]
//!
//! [mbs2]
//! eta_con = 0.9
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::{Engine, ScenarioName, ScenarioSpec, Sweep};
use crate::model::{InterferometerConfig, OdCalibration};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub scenario: ScenarioName,
    #[serde(default)]
    pub engine: Option<Engine>,
    #[serde(default)]
    pub trials: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub phase_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub od_calibration: Option<OdCalibration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFile {
    pub run: RunSection,
    pub spec: ScenarioSpec,
}

/// Tables whose `kind` tag selects a variant; they replace the preset
/// rather than merge into it.
const TAGGED: [&str; 2] = ["carrier_phase", "overlap"];

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) if !TAGGED.contains(&k.as_str()) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn parse_run_file(text: &str) -> Result<RunFile> {
    let mut table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    let run_value = table
        .remove("run")
        .ok_or_else(|| Error::Config("missing [run] table".into()))?;
    let run: RunSection = run_value
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("[run]: {}", e.message())))?;

    let mut spec = ScenarioSpec::preset(run.scenario);
    if !table.is_empty() {
        let mut base = Table::try_from(spec.base_config)
            .map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, table);
        spec.base_config = InterferometerConfig::deserialize(base)
            .map_err(|e| Error::Config(e.message().to_string()))?;
    }
    if let Some(e) = run.engine {
        spec.engine = e;
    }
    if let Some(t) = run.trials {
        spec.trials_per_point = t;
    }
    if let Some(s) = run.seed {
        spec.seed = s;
    }
    if let Some(s) = &run.sweep {
        spec.sweep = s.clone();
    }
    if let Some(g) = &run.phase_grid {
        spec.phase_grid = g.clone();
    }
    if let Some(c) = run.od_calibration {
        spec.od_calibration = c;
    }
    spec.validate()?;
    Ok(RunFile { run, spec })
}

pub fn load_run_file(path: &Path) -> Result<RunFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run_file(&text)
}
