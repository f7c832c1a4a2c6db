//! Named experiments that regenerate each reference data set, wiring the
//! analytic engine, the Monte Carlo engine and the fits together.
//!
//! Every scenario is fully described by a [`ScenarioSpec`]; the spec is
//! written next to the data as a provenance sidecar and is enough to rerun
//! the scenario bit for bit.

mod config;
mod emit;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{fit_exponential_decay, visibility_from_fringe, DecayFit, SinusoidFit};
use crate::evolution::{phase_grid, Interferometer};
use crate::model::{
    od_to_efficiency, InterferometerConfig, MemoryBeamSplitter, OdCalibration, OverlapSpec,
};
use crate::montecarlo::{self, DecayTarget, Execution, SeedSpec};
use crate::temporal::{envelope, integrate};
use crate::{Error, Result};

pub use config::{load_run_file, parse_run_file, RunFile, RunSection};
pub use emit::{emit, read_provenance, replay, PROVENANCE_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    Fig1d,
    Fig2,
    Fig3,
    Fig4,
    Fig5a,
    Fig5b,
    Fig5c,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 7] = [
        ScenarioName::Fig1d,
        ScenarioName::Fig2,
        ScenarioName::Fig3,
        ScenarioName::Fig4,
        ScenarioName::Fig5a,
        ScenarioName::Fig5b,
        ScenarioName::Fig5c,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioName::Fig1d => "fig1d",
            ScenarioName::Fig2 => "fig2",
            ScenarioName::Fig3 => "fig3",
            ScenarioName::Fig4 => "fig4",
            ScenarioName::Fig5a => "fig5a",
            ScenarioName::Fig5b => "fig5b",
            ScenarioName::Fig5c => "fig5c",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Analytic,
    MonteCarlo,
    Both,
}

impl Engine {
    pub fn analytic(&self) -> bool {
        matches!(self, Engine::Analytic | Engine::Both)
    }

    pub fn monte_carlo(&self) -> bool {
        matches!(self, Engine::MonteCarlo | Engine::Both)
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "analytic" => Ok(Engine::Analytic),
            "monte_carlo" | "montecarlo" | "mc" => Ok(Engine::MonteCarlo),
            "both" => Ok(Engine::Both),
            other => Err(Error::InvalidInput(format!("unknown engine '{other}'"))),
        }
    }
}

/// Config field scanned by a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// QRNG weight.
    Xi,
    /// Second-memory total efficiency; write-in held fixed.
    Eta2,
    /// Second-memory storage time, ns.
    StorageTime2,
    /// Second-memory optical depth, mapped to `Eta2` through the OD
    /// calibration.
    OpticalDepth,
    /// EOM phase, rad.
    EomPhase,
    /// Storage time of whichever memory a decay scan reads out, ns.
    StorageTime,
}

impl SweepParameter {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParameter::Xi => "xi",
            SweepParameter::Eta2 => "eta2",
            SweepParameter::StorageTime2 => "storage_time_2",
            SweepParameter::OpticalDepth => "optical_depth",
            SweepParameter::EomPhase => "eom_phase",
            SweepParameter::StorageTime => "storage_time",
        }
    }

    /// Column header, with unit.
    pub fn column(&self) -> &'static str {
        match self {
            SweepParameter::Xi => "xi",
            SweepParameter::Eta2 => "eta2",
            SweepParameter::StorageTime2 => "storage_time_2_ns",
            SweepParameter::OpticalDepth => "optical_depth",
            SweepParameter::EomPhase => "eom_phase_rad",
            SweepParameter::StorageTime => "storage_time_ns",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Optional labels reported next to each value, e.g. the nominal QRNG
    /// duty cycle behind a fitted weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal: Option<Vec<f64>>,
}

impl Sweep {
    pub fn new(parameter: SweepParameter, values: Vec<f64>) -> Self {
        Self {
            parameter,
            values,
            nominal: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    pub base_config: InterferometerConfig,
    pub sweep: Sweep,
    pub engine: Engine,
    pub trials_per_point: u64,
    pub seed: u64,
    /// EOM phases of every fringe.
    pub phase_grid: Vec<f64>,
    #[serde(default)]
    pub od_calibration: OdCalibration,
}

/// Reference parameters of the ξ-sweep data set.
pub const FIG2_TOTAL_COUNTS: f64 = 611.0;
pub const FIG2_ETA1: f64 = 0.133;
pub const FIG2_ETA1_CON: f64 = 0.850;
pub const FIG2_ETA2: f64 = 0.24;
pub const FIG2_XI_NOMINAL: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const FIG2_XI_FITTED: [f64; 5] = [0.01, 0.24, 0.53, 0.74, 0.96];

pub const FIG3_TOTAL_COUNTS: f64 = 568.0;
pub const FIG3_ETA1: f64 = 0.122;
pub const FIG3_ETA1_CON: f64 = 0.850;
pub const FIG3_ETA2: [f64; 5] = [0.331, 0.259, 0.114, 0.015, 0.0];

pub const FIG4_STORAGE_TIMES: [f64; 7] = [160.0, 180.0, 200.0, 220.0, 240.0, 260.0, 280.0];
pub const MATCHED_STORAGE_TIME: f64 = 200.0;

/// `(A, T, g0)` of the reference decay fits: first memory, second memory,
/// interferometer at zero phase.
pub const FIG5B_MEMORY1: (f64, f64, f64) = (503.0, 420.0, 58.0);
pub const FIG5B_MEMORY2: (f64, f64, f64) = (457.0, 893.0, 51.0);
pub const FIG5B_INTERFEROMETER: (f64, f64, f64) = (304.0, 691.0, 32.0);

pub const FIG5C_ETA1: f64 = 0.132;
pub const FIG5C_ETA1_CON: f64 = 0.88;

pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 20_190_101;

fn unit_overlap() -> OverlapSpec {
    OverlapSpec::fixed(Complex64::new(1.0, 0.0))
}

/// Phases `0, pi/4, ..., 2 pi`.
pub fn quarter_pi_grid() -> Vec<f64> {
    phase_grid(0.0, 2.0 * PI, 8)
}

impl ScenarioSpec {
    /// The scenario with its reference parameters.
    pub fn preset(name: ScenarioName) -> Self {
        let fig2 = {
            let mut c = InterferometerConfig::default().with_overlap(unit_overlap());
            c.mbs1 = MemoryBeamSplitter::from_total(FIG2_ETA1_CON, FIG2_ETA1, MATCHED_STORAGE_TIME);
            c.mbs2 = MemoryBeamSplitter::from_total(FIG2_ETA1_CON, FIG2_ETA2, MATCHED_STORAGE_TIME);
            c.source.total_counts = FIG2_TOTAL_COUNTS;
            c
        };
        let fig3 = {
            let mut c = fig2;
            c.mbs1 = MemoryBeamSplitter::from_total(FIG3_ETA1_CON, FIG3_ETA1, MATCHED_STORAGE_TIME);
            c.source.total_counts = FIG3_TOTAL_COUNTS;
            c
        };
        let fig5 = {
            let mut c = fig2;
            c.mbs1 = MemoryBeamSplitter::from_total(FIG5C_ETA1_CON, FIG5C_ETA1, MATCHED_STORAGE_TIME);
            c
        };
        let (base_config, sweep) = match name {
            ScenarioName::Fig1d => (fig2, Sweep::new(SweepParameter::Xi, vec![1.0, 0.0])),
            ScenarioName::Fig2 => (
                fig2,
                Sweep {
                    parameter: SweepParameter::Xi,
                    values: FIG2_XI_FITTED.to_vec(),
                    nominal: Some(FIG2_XI_NOMINAL.to_vec()),
                },
            ),
            ScenarioName::Fig3 => (fig3, Sweep::new(SweepParameter::Eta2, FIG3_ETA2.to_vec())),
            ScenarioName::Fig4 => {
                // calibrated packets from the default config, overlap integrated
                let d = InterferometerConfig::default();
                let mut c = fig2.with_overlap(OverlapSpec::Computed);
                c.mbs1.retrieved_packet = d.mbs1.retrieved_packet;
                c.mbs2.retrieved_packet = d.mbs2.retrieved_packet;
                (
                    c,
                    Sweep::new(SweepParameter::StorageTime2, FIG4_STORAGE_TIMES.to_vec()),
                )
            }
            ScenarioName::Fig5a => (fig5, Sweep::new(SweepParameter::EomPhase, vec![0.0, PI])),
            ScenarioName::Fig5b => {
                let mut c = fig5;
                c.mbs1 = c.mbs1.with_coherence_time(FIG5B_MEMORY1.1);
                c.mbs2 = c.mbs2.with_coherence_time(FIG5B_MEMORY2.1);
                let grid = (0..=8).map(|k| 200.0 * k as f64).collect();
                (c, Sweep::new(SweepParameter::StorageTime, grid))
            }
            ScenarioName::Fig5c => {
                let grid = (0..=8).map(|k| 5.0 * k as f64).collect();
                (fig5, Sweep::new(SweepParameter::OpticalDepth, grid))
            }
        };
        Self {
            name,
            base_config,
            sweep,
            engine: Engine::Analytic,
            trials_per_point: DEFAULT_TRIALS,
            seed: DEFAULT_SEED,
            phase_grid: quarter_pi_grid(),
            od_calibration: OdCalibration::default(),
        }
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trials(mut self, trials: u64) -> Self {
        self.trials_per_point = trials;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.base_config.validate()?;
        let allowed: &[SweepParameter] = match self.name {
            ScenarioName::Fig5a => &[SweepParameter::EomPhase],
            ScenarioName::Fig5b => &[SweepParameter::StorageTime],
            _ => &[
                SweepParameter::Xi,
                SweepParameter::Eta2,
                SweepParameter::StorageTime2,
                SweepParameter::OpticalDepth,
            ],
        };
        if !allowed.contains(&self.sweep.parameter) {
            return Err(Error::InvalidInput(format!(
                "invalid sweep: scenario {} cannot sweep '{}'",
                self.name,
                self.sweep.parameter.as_str()
            )));
        }
        if let Some(v) = self.sweep.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid sweep: value {v}")));
        }
        if let Some(nominal) = &self.sweep.nominal {
            if nominal.len() != self.sweep.values.len() {
                return Err(Error::InvalidInput(
                    "invalid sweep: nominal labels do not match values".into(),
                ));
            }
        }
        if self.engine.monte_carlo() && self.trials_per_point == 0 {
            return Err(Error::InvalidInput(
                "trials_per_point must be positive for the Monte Carlo engine".into(),
            ));
        }
        if self.name != ScenarioName::Fig5a && self.name != ScenarioName::Fig5b {
            crate::evolution::check_phase_grid(&self.phase_grid)?;
        }
        // every sweep point must produce a valid config
        for &v in &self.sweep.values {
            self.point_config(v)?.validate()?;
        }
        Ok(())
    }

    /// Base config with the sweep parameter set to `value`.
    pub fn point_config(&self, value: f64) -> Result<InterferometerConfig> {
        let mut c = self.base_config;
        match self.sweep.parameter {
            SweepParameter::Xi => c.qrng.xi = value,
            SweepParameter::Eta2 => c = c.with_eta2_total(value),
            SweepParameter::StorageTime2 => c.mbs2.storage_time = value,
            SweepParameter::OpticalDepth => {
                c = c.with_eta2_total(od_to_efficiency(value, &self.od_calibration)?)
            }
            SweepParameter::EomPhase => c.eom_phase = value,
            SweepParameter::StorageTime => {}
        }
        Ok(c)
    }
}

/// One data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    /// File name without extension.
    pub name: String,
    /// Column headers, units included.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitSummary {
    Sinusoid(SinusoidFit),
    Decay(DecayFit),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub label: String,
    pub fit: FitSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nominal: Option<f64>,
    pub zeta_magnitude: f64,
    pub visibility_analytic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visibility_fit_analytic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visibility_fit_montecarlo: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub spec: ScenarioSpec,
    /// Modeling choices that shape the output but are not in the config.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: ScenarioName,
    pub series: Vec<Series>,
    pub fits: Vec<FitRecord>,
    pub points: Vec<PointSummary>,
    pub provenance: Provenance,
}

impl ScenarioResult {
    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioResult> {
    run_scenario_with(spec, Execution::Parallel)
}

/// Runs a scenario. Output does not depend on `execution`.
pub fn run_scenario_with(spec: &ScenarioSpec, execution: Execution) -> Result<ScenarioResult> {
    spec.validate()?;
    let mut out = Collected::default();
    match spec.name {
        ScenarioName::Fig5a => time_resolved(spec, execution, &mut out)?,
        ScenarioName::Fig5b => decay_scans(spec, execution, &mut out)?,
        _ => fringe_sweep(spec, execution, &mut out)?,
    }
    let mut notes = vec![format!(
        "analytic engine uses the {} reading of the QRNG weight; the Monte Carlo engine samples the QRNG per trial",
        spec.base_config.qrng.mode
    )];
    if spec.sweep.parameter == SweepParameter::OpticalDepth {
        notes.push(format!(
            "eta2(OD) = {} * (1 - exp(-OD / {})) is a modeling choice",
            spec.od_calibration.eta_max, spec.od_calibration.od_sat
        ));
    }
    if spec.name == ScenarioName::Fig5b {
        notes.push(
            "reference decay curves are written as decay_*_reference; the simulated background g0 comes from dark counts only"
                .into(),
        );
    }
    Ok(ScenarioResult {
        name: spec.name,
        series: out.series,
        fits: out.fits,
        points: out.points,
        provenance: Provenance {
            generator: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).into(),
            spec: spec.clone(),
            notes,
        },
    })
}

#[derive(Default)]
struct Collected {
    series: Vec<Series>,
    fits: Vec<FitRecord>,
    points: Vec<PointSummary>,
}

fn point_label(parameter: SweepParameter, value: f64) -> String {
    format!("{}_{}", parameter.as_str(), crate::analysis::format_value(value))
}

struct PointOutput {
    series: Vec<Series>,
    fits: Vec<FitRecord>,
    summary: PointSummary,
}

fn map_points<T: Send>(
    spec: &ScenarioSpec,
    execution: Execution,
    f: impl Fn(usize, f64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    let indexed: Vec<(usize, f64)> = spec.sweep.values.iter().copied().enumerate().collect();
    match execution {
        Execution::Serial => indexed.into_iter().map(|(i, v)| f(i, v)).collect(),
        Execution::Parallel => indexed.into_par_iter().map(|(i, v)| f(i, v)).collect(),
    }
}

/// Fringe at each sweep point, plus a visibility summary.
fn fringe_sweep(spec: &ScenarioSpec, execution: Execution, out: &mut Collected) -> Result<()> {
    let seed = SeedSpec::new(spec.seed);
    let param = spec.sweep.parameter;
    let points = map_points(spec, execution, |i, value| {
        let config = spec.point_config(value)?;
        let engine = Interferometer::new(config)?;
        let label = point_label(param, value);
        let mut series = Vec::new();
        let mut fits = Vec::new();
        let mut summary = PointSummary {
            value,
            nominal: spec.sweep.nominal.as_ref().map(|n| n[i]),
            zeta_magnitude: engine.zeta().norm(),
            visibility_analytic: engine.visibility(),
            visibility_fit_analytic: None,
            visibility_fit_montecarlo: None,
        };
        if spec.engine.analytic() {
            let scan = engine.fringe(&spec.phase_grid)?;
            if let Ok(v) = visibility_from_fringe(&scan) {
                summary.visibility_fit_analytic = Some(v.value);
                fits.push(FitRecord {
                    label: format!("fringe_{label}_analytic"),
                    fit: FitSummary::Sinusoid(v.fit),
                });
            }
            series.push(Series {
                name: format!("fringe_{label}_analytic"),
                columns: vec!["phase_rad".into(), "expected_counts".into()],
                rows: scan
                    .phases
                    .iter()
                    .zip(&scan.values)
                    .map(|(p, v)| vec![*p, *v])
                    .collect(),
            });
        }
        if spec.engine.monte_carlo() {
            let mc = montecarlo::run_experiment(
                &config,
                &spec.phase_grid,
                spec.trials_per_point,
                &seed.derive(i as u64),
                execution,
            )?;
            if let Ok(v) = visibility_from_fringe(&mc.scan) {
                summary.visibility_fit_montecarlo = Some(v.value);
                fits.push(FitRecord {
                    label: format!("fringe_{label}_montecarlo"),
                    fit: FitSummary::Sinusoid(v.fit),
                });
            }
            series.push(Series {
                name: format!("fringe_{label}_montecarlo"),
                columns: vec![
                    "phase_rad".into(),
                    "counts".into(),
                    "expected_counts".into(),
                    "dark_counts".into(),
                    "trials".into(),
                ],
                rows: (0..mc.scan.len())
                    .map(|k| {
                        vec![
                            mc.scan.phases[k],
                            mc.scan.values[k],
                            mc.expected[k],
                            mc.dark[k] as f64,
                            spec.trials_per_point as f64,
                        ]
                    })
                    .collect(),
            });
        }
        Ok(PointOutput {
            series,
            fits,
            summary,
        })
    })?;

    let mut columns = vec![param.column().to_string()];
    let with_nominal = spec.sweep.nominal.is_some();
    if with_nominal {
        columns.push(format!("nominal_{}", param.column()));
    }
    columns.push("zeta_magnitude".into());
    columns.push("visibility_analytic".into());
    if spec.engine.analytic() {
        columns.push("visibility_fit_analytic".into());
    }
    if spec.engine.monte_carlo() {
        columns.push("visibility_fit_montecarlo".into());
    }
    let mut rows = Vec::new();
    for p in points {
        out.series.extend(p.series);
        out.fits.extend(p.fits);
        let s = &p.summary;
        let mut row = vec![s.value];
        if with_nominal {
            row.push(s.nominal.unwrap_or(f64::NAN));
        }
        row.push(s.zeta_magnitude);
        row.push(s.visibility_analytic);
        if spec.engine.analytic() {
            row.push(s.visibility_fit_analytic.unwrap_or(f64::NAN));
        }
        if spec.engine.monte_carlo() {
            row.push(s.visibility_fit_montecarlo.unwrap_or(f64::NAN));
        }
        rows.push(row);
        out.points.push(p.summary);
    }
    out.series.push(Series {
        name: "visibility".into(),
        columns,
        rows,
    });
    Ok(())
}

/// Bins of the time-resolved histograms.
pub const TIME_BINS: usize = 50;

/// Counts versus arrival time in the detection gate at each EOM phase.
fn time_resolved(spec: &ScenarioSpec, execution: Execution, out: &mut Collected) -> Result<()> {
    let seed = SeedSpec::new(spec.seed);
    let points = map_points(spec, execution, |i, phi| {
        let config = spec.point_config(phi)?;
        let engine = Interferometer::new(config)?;
        let label = point_label(SweepParameter::EomPhase, phi);
        let gate = config.detector.gate_window;
        let width = gate / TIME_BINS as f64;
        let centers: Vec<f64> = (0..TIME_BINS).map(|k| (k as f64 + 0.5) * width).collect();
        let mut series = Vec::new();
        if spec.engine.analytic() {
            // signal arrival follows the first memory's packet, gate centred on read-out
            let packet = config.mbs1.retrieved_packet;
            let p = engine.detection_probability(phi);
            let n = config.source.total_counts;
            let rows = (0..TIME_BINS)
                .map(|k| {
                    let lo = k as f64 * width - 0.5 * gate + packet.center;
                    let frac = integrate(
                        |t| Complex64::new(envelope(&packet, t).norm_sqr(), 0.0),
                        &[packet.center],
                        lo,
                        lo + width,
                    )
                    .map(|v| v.re)?;
                    Ok(vec![centers[k], n * p * frac])
                })
                .collect::<Result<Vec<_>>>()?;
            series.push(Series {
                name: format!("time_{label}_analytic"),
                columns: vec!["time_ns".into(), "expected_counts".into()],
                rows,
            });
        }
        if spec.engine.monte_carlo() {
            let hist = montecarlo::time_histogram(
                &config,
                phi,
                spec.trials_per_point,
                TIME_BINS,
                &seed.derive(i as u64),
                execution,
            )?;
            series.push(Series {
                name: format!("time_{label}_montecarlo"),
                columns: vec!["time_ns".into(), "counts".into()],
                rows: centers
                    .iter()
                    .zip(&hist.counts)
                    .map(|(t, c)| vec![*t, *c as f64])
                    .collect(),
            });
        }
        Ok(PointOutput {
            series,
            fits: Vec::new(),
            summary: PointSummary {
                value: phi,
                nominal: None,
                zeta_magnitude: engine.zeta().norm(),
                visibility_analytic: engine.visibility(),
                visibility_fit_analytic: None,
                visibility_fit_montecarlo: None,
            },
        })
    })?;
    for p in points {
        out.series.extend(p.series);
        out.points.push(p.summary);
    }
    Ok(())
}

/// Counts versus storage time for each memory alone and for the closed
/// interferometer, with exponential fits.
fn decay_scans(spec: &ScenarioSpec, execution: Execution, out: &mut Collected) -> Result<()> {
    let grid = &spec.sweep.values;
    let seed = SeedSpec::new(spec.seed);
    let targets = [
        (DecayTarget::Memory1, FIG5B_MEMORY1),
        (DecayTarget::Memory2, FIG5B_MEMORY2),
        (DecayTarget::Interferometer, FIG5B_INTERFEROMETER),
    ];
    for (k, (target, (a, t, g0))) in targets.into_iter().enumerate() {
        let name = target.name();
        if spec.engine.analytic() {
            let reference: Vec<(f64, f64)> =
                grid.iter().map(|&x| (x, a * (-x / t).exp() + g0)).collect();
            push_decay(out, format!("decay_{name}_reference"), "counts", &reference);
            let trials = spec.trials_per_point.max(1);
            let expected = montecarlo::decoherence_expected(&spec.base_config, grid, trials, target)?;
            push_decay(out, format!("decay_{name}_analytic"), "expected_counts", &expected);
        }
        if spec.engine.monte_carlo() {
            let counts = montecarlo::decoherence_scan(
                &spec.base_config,
                grid,
                spec.trials_per_point,
                &seed.derive(k as u64),
                target,
                execution,
            )?;
            let counts: Vec<(f64, f64)> = counts.into_iter().map(|(x, c)| (x, c as f64)).collect();
            push_decay(out, format!("decay_{name}_montecarlo"), "counts", &counts);
        }
    }
    Ok(())
}

fn push_decay(out: &mut Collected, name: String, column: &str, points: &[(f64, f64)]) {
    if let Ok(fit) = fit_exponential_decay(points) {
        out.fits.push(FitRecord {
            label: name.clone(),
            fit: FitSummary::Decay(fit),
        });
    }
    out.series.push(Series {
        name,
        columns: vec!["storage_time_ns".into(), column.into()],
        rows: points.iter().map(|(x, y)| vec![*x, *y]).collect(),
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for n in ScenarioName::ALL {
            assert_eq!(n.as_str().parse::<ScenarioName>().unwrap(), n);
        }
        assert!(matches!(
            "fig9".parse::<ScenarioName>(),
            Err(Error::UnknownScenario(_))
        ));
    }

    #[test]
    fn presets_validate() {
        for n in ScenarioName::ALL {
            ScenarioSpec::preset(n).validate().unwrap();
        }
    }

    #[test]
    fn sweep_must_fit_scenario() {
        let mut s = ScenarioSpec::preset(ScenarioName::Fig2);
        s.sweep.parameter = SweepParameter::StorageTime;
        assert!(s.validate().unwrap_err().to_string().contains("invalid sweep"));

        let mut s = ScenarioSpec::preset(ScenarioName::Fig3);
        s.sweep.values.push(1.5);
        assert!(s.validate().is_err());

        let s = ScenarioSpec::preset(ScenarioName::Fig2)
            .with_engine(Engine::MonteCarlo)
            .with_trials(0);
        assert!(s.validate().is_err());
    }

    #[test]
    fn fig3_particle_point_is_flat() {
        let r = run_scenario(&ScenarioSpec::preset(ScenarioName::Fig3)).unwrap();
        let flat = r.series("fringe_eta2_0.0_analytic").unwrap();
        assert!(flat.rows.iter().all(|row| (row[1] - flat.rows[0][1]).abs() < 1e-12));
        let last = r.points.last().unwrap();
        assert_eq!(last.visibility_analytic, 0.0);
        assert!(last.visibility_fit_analytic.unwrap() < 1e-12);
    }

    #[test]
    fn fig5c_visibility_grows_with_depth() {
        let r = run_scenario(&ScenarioSpec::preset(ScenarioName::Fig5c)).unwrap();
        assert_eq!(r.points[0].visibility_analytic, 0.0);
        assert!(r
            .points
            .windows(2)
            .all(|w| w[1].visibility_analytic > w[0].visibility_analytic));
        assert!(r.provenance.notes.iter().any(|n| n.contains("modeling choice")));
    }

    #[test]
    fn fig5b_reference_curves_are_recovered() {
        let r = run_scenario(&ScenarioSpec::preset(ScenarioName::Fig5b)).unwrap();
        for (label, (a, t, g0)) in [
            ("decay_memory1_reference", FIG5B_MEMORY1),
            ("decay_memory2_reference", FIG5B_MEMORY2),
            ("decay_interferometer_reference", FIG5B_INTERFEROMETER),
        ] {
            let fit = r.fits.iter().find(|f| f.label == label).unwrap();
            let FitSummary::Decay(d) = fit.fit else { panic!() };
            assert!((d.a / a - 1.0).abs() < 1e-6);
            assert!((d.t / t - 1.0).abs() < 1e-6);
            assert!((d.g0 / g0 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn fig5a_time_profiles() {
        let r = run_scenario(&ScenarioSpec::preset(ScenarioName::Fig5a).with_engine(Engine::Analytic))
            .unwrap();
        let zero: f64 = r.series("time_eom_phase_0.0_analytic").unwrap().rows.iter().map(|x| x[1]).sum();
        let pi_name = format!("time_eom_phase_{}_analytic", crate::analysis::format_value(PI));
        let pi: f64 = r.series(&pi_name).unwrap().rows.iter().map(|x| x[1]).sum();
        assert!(zero > 4.0 * pi);
    }
}
