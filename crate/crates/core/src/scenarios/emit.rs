//! CSV output and the JSON provenance sidecar.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{run_scenario_with, FitRecord, PointSummary, ScenarioResult, ScenarioSpec};
use crate::analysis::write_series;
use crate::montecarlo::Execution;
use crate::{Error, Result};

pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Serialize)]
struct SidecarOut<'a> {
    scenario: String,
    generator: &'a str,
    files: Vec<String>,
    notes: &'a [String],
    spec: &'a ScenarioSpec,
    points: &'a [PointSummary],
    fits: &'a [FitRecord],
}

#[derive(Deserialize)]
struct SidecarIn {
    spec: ScenarioSpec,
}

/// Writes one `<series>.csv` per series and `provenance.json` into `dir`,
/// creating it if needed. Returns the written paths, sidecar last.
pub fn emit(result: &ScenarioResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(result.series.len() + 1);
    for s in &result.series {
        let path = dir.join(format!("{}.csv", s.name));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let header: Vec<&str> = s.columns.iter().map(String::as_str).collect();
        write_series(BufWriter::new(file), &header, s.rows.iter().cloned())
            .map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let sidecar = SidecarOut {
        scenario: result.name.to_string(),
        generator: &result.provenance.generator,
        files: result.series.iter().map(|s| format!("{}.csv", s.name)).collect(),
        notes: &result.provenance.notes,
        spec: &result.provenance.spec,
        points: &result.points,
        fits: &result.fits,
    };
    let path = dir.join(PROVENANCE_FILE);
    let mut text = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Config(format!("provenance: {e}")))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// The scenario spec recorded in a sidecar.
pub fn read_provenance(path: &Path) -> Result<ScenarioSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let s: SidecarIn = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(s.spec)
}

/// Reruns the scenario recorded in `sidecar` and writes it to `out`.
pub fn replay(sidecar: &Path, out: &Path, execution: Execution) -> Result<ScenarioResult> {
    let spec = read_provenance(sidecar)?;
    let result = run_scenario_with(&spec, execution)?;
    emit(&result, out)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{run_scenario, ScenarioName, SweepParameter};

    #[test]
    fn empty_sweep_gives_header_only_summary() {
        let mut spec = ScenarioSpec::preset(ScenarioName::Fig3);
        spec.sweep.values.clear();
        let r = run_scenario(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit(&r, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("visibility.csv")).unwrap();
        assert_eq!(text, "eta2,zeta_magnitude,visibility_analytic,visibility_fit_analytic\n");
    }

    #[test]
    fn sidecar_round_trip() {
        let mut spec = ScenarioSpec::preset(ScenarioName::Fig4);
        spec.sweep = crate::scenarios::Sweep::new(SweepParameter::StorageTime2, vec![200.0]);
        let r = run_scenario(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit(&r, dir.path()).unwrap();
        assert_eq!(files.last().unwrap().file_name().unwrap(), PROVENANCE_FILE);
        assert_eq!(read_provenance(&dir.path().join(PROVENANCE_FILE)).unwrap(), spec);
    }
}
