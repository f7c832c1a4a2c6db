//! Trial-level stochastic simulation of the experiment.
//!
//! Every trial draws from its own random stream, derived from the master
//! seed and the trial index alone, so results do not depend on how trials
//! are scheduled across threads. Aggregation is integer addition.
//!
//! The QRNG is sampled per heralded trial, which is the ensemble reading of
//! the QRNG weight; the amplitude reading has no trial-level counterpart.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evolution::{check_phase_grid, FringeScan, Interferometer, QrngBranch};
use crate::model::{InterferometerConfig, OverlapSpec, QrngMode};
use crate::temporal::WavePacket;
use crate::{Error, Result};

/// Trials handed to one worker at a time.
const CHUNK: u64 = 8192;
/// Retries when a sampled arrival time falls outside the gate.
const MAX_TIME_DRAWS: usize = 64;
pub const DEFAULT_HISTOGRAM_BINS: usize = 50;

/// Master seed plus a substream label.
///
/// The generator for trial `i` is ChaCha8 keyed with four successive
/// SplitMix64 outputs started from `master_seed ^ splitmix64(substream)`,
/// with ChaCha stream id `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    #[serde(default)]
    pub substream: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            substream: 0,
        }
    }

    /// Child spec for an independent part of a larger run (a sweep point,
    /// a scan target).
    pub fn derive(&self, label: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            substream: splitmix64(self.substream ^ splitmix64(label)),
        }
    }

    fn key(&self) -> [u8; 32] {
        let mut state = self.master_seed ^ splitmix64(self.substream);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            chunk.copy_from_slice(&splitmix64_mix(state).to_le_bytes());
        }
        key
    }

    pub fn trial_stream(&self, trial_index: u64) -> ChaCha8Rng {
        stream_for(&self.key(), trial_index)
    }
}

fn stream_for(key: &[u8; 32], trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(*key);
    rng.set_stream(trial_index);
    rng
}

fn splitmix64(x: u64) -> u64 {
    splitmix64_mix(x.wrapping_add(0x9E37_79B9_7F4A_7C15))
}

fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionKind {
    Signal,
    Dark,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Arrival time within the gate, ns from the gate opening.
    pub time_bin: f64,
    pub kind: DetectionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub herald_fired: bool,
    /// `None` when nothing was heralded and the QRNG gate never fired.
    pub qrng_outcome: Option<QrngBranch>,
    pub detection: Option<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total_trials: u64,
}

impl CountHistogram {
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Self {
        let bin_edges = (0..=bins)
            .map(|k| lo + (hi - lo) * k as f64 / bins as f64)
            .collect();
        Self {
            bin_edges,
            counts: vec![0; bins],
            total_trials: 0,
        }
    }

    fn bin_of(&self, t: f64) -> Option<usize> {
        let lo = *self.bin_edges.first()?;
        let hi = *self.bin_edges.last()?;
        if !(t >= lo && t < hi) {
            return None;
        }
        let n = self.counts.len();
        let idx = ((t - lo) / (hi - lo) * n as f64) as usize;
        Some(idx.min(n - 1))
    }

    pub fn record(&mut self, t: f64) {
        if let Some(i) = self.bin_of(t) {
            self.counts[i] += 1;
        }
    }

    fn merge(&mut self, other: &CountHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_trials += other.total_trials;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Returns `In` with probability `xi`.
pub fn sample_qrng<R: Rng + ?Sized>(xi: f64, rng: &mut R) -> QrngBranch {
    if rng.random::<f64>() < xi {
        QrngBranch::In
    } else {
        QrngBranch::Out
    }
}

/// Per-phase trial law, precomputed from the analytic engine.
#[derive(Debug, Clone, Copy)]
pub struct TrialModel {
    herald_probability: f64,
    xi: f64,
    efficiency: f64,
    p_in: f64,
    p_out: f64,
    p_dark: f64,
    gate_window: f64,
    packet: WavePacket,
}

impl TrialModel {
    pub fn new(engine: &Interferometer, phi: f64) -> Self {
        let c = engine.config();
        // Trial-level QRNG sampling is the ensemble reading.
        let ensemble = if c.qrng.mode == QrngMode::Ensemble {
            *engine
        } else {
            Interferometer::with_overlap(c.with_mode(QrngMode::Ensemble), engine.zeta())
                .expect("mode change keeps a validated config valid")
        };
        Self {
            herald_probability: c.source.herald_probability,
            xi: c.qrng.xi,
            efficiency: c.detector.efficiency,
            p_in: ensemble.branch_probability(phi, QrngBranch::In),
            p_out: ensemble.branch_probability(phi, QrngBranch::Out),
            p_dark: c.detector.dark_probability(),
            gate_window: c.detector.gate_window,
            packet: c.mbs1.retrieved_packet,
        }
    }

    /// Exact probability that a trial records a detection.
    pub fn detection_fraction(&self) -> f64 {
        let click = |p: f64| 1.0 - (1.0 - self.efficiency * p) * (1.0 - self.p_dark);
        self.herald_probability
            * (self.xi * click(self.p_in) + (1.0 - self.xi) * click(self.p_out))
            + (1.0 - self.herald_probability) * self.p_dark
    }

    pub fn run<R: Rng + ?Sized>(&self, trial_index: u64, rng: &mut R) -> TrialRecord {
        let herald_fired = rng.random::<f64>() < self.herald_probability;
        let mut qrng_outcome = None;
        let mut signal = None;
        if herald_fired {
            let q = sample_qrng(self.xi, rng);
            qrng_outcome = Some(q);
            let p = match q {
                QrngBranch::In => self.p_in,
                QrngBranch::Out => self.p_out,
            };
            if rng.random::<f64>() < self.efficiency * p {
                signal = Some(self.signal_time(rng));
            }
        }
        let dark = if rng.random::<f64>() < self.p_dark {
            Some(rng.random::<f64>() * self.gate_window)
        } else {
            None
        };
        let detection = match (signal, dark) {
            (Some(s), Some(d)) if d < s => Some(Detection {
                time_bin: d,
                kind: DetectionKind::Dark,
            }),
            (Some(s), _) => Some(Detection {
                time_bin: s,
                kind: DetectionKind::Signal,
            }),
            (None, Some(d)) => Some(Detection {
                time_bin: d,
                kind: DetectionKind::Dark,
            }),
            (None, None) => None,
        };
        TrialRecord {
            trial_index,
            herald_fired,
            qrng_outcome,
            detection,
        }
    }

    /// Gate centred on the read-out; arrival drawn from the retrieved packet.
    fn signal_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut t = 0.0;
        for _ in 0..MAX_TIME_DRAWS {
            t = 0.5 * self.gate_window + self.packet.sample_time(rng) - self.packet.center;
            if (0.0..self.gate_window).contains(&t) {
                return t;
            }
        }
        t.clamp(0.0, self.gate_window * (1.0 - f64::EPSILON))
    }
}

/// One trial at EOM phase `phi`.
pub fn run_trial<R: Rng + ?Sized>(
    config: &InterferometerConfig,
    phi: f64,
    trial_index: u64,
    rng: &mut R,
) -> Result<TrialRecord> {
    let engine = Interferometer::new(*config)?;
    Ok(TrialModel::new(&engine, phi).run(trial_index, rng))
}

/// Records for trials `first..first + count` at phase `phi`.
pub fn trial_records(
    engine: &Interferometer,
    phi: f64,
    first: u64,
    count: u64,
    seed: &SeedSpec,
) -> Vec<TrialRecord> {
    let model = TrialModel::new(engine, phi);
    let key = seed.key();
    (first..first + count)
        .map(|i| model.run(i, &mut stream_for(&key, i)))
        .collect()
}

/// Writes one JSON object per line with fields `trial_index`,
/// `herald_fired`, `qrng_outcome` (`"In"`, `"Out"` or `null`) and
/// `detection` (`{"time_bin": ns, "kind": "Signal"|"Dark"}` or `null`).
pub fn write_records<W: Write>(records: &[TrialRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    detections: u64,
    signal: u64,
    dark: u64,
    heralded: u64,
}

impl Tally {
    fn add(mut self, o: Tally) -> Tally {
        self.detections += o.detections;
        self.signal += o.signal;
        self.dark += o.dark;
        self.heralded += o.heralded;
        self
    }
}

fn run_block(
    model: &TrialModel,
    key: &[u8; 32],
    first: u64,
    count: u64,
    gate: f64,
    bins: usize,
    execution: Execution,
) -> (Tally, CountHistogram) {
    let chunk = |start: u64| {
        let end = (start + CHUNK).min(first + count);
        let mut tally = Tally::default();
        let mut hist = CountHistogram::uniform(0.0, gate, bins);
        for i in start..end {
            let r = model.run(i, &mut stream_for(key, i));
            tally.heralded += r.herald_fired as u64;
            if let Some(d) = r.detection {
                tally.detections += 1;
                match d.kind {
                    DetectionKind::Signal => tally.signal += 1,
                    DetectionKind::Dark => tally.dark += 1,
                }
                hist.record(d.time_bin);
            }
        }
        hist.total_trials = end - start;
        (tally, hist)
    };
    let starts: Vec<u64> = (first..first + count).step_by(CHUNK as usize).collect();
    let parts: Vec<(Tally, CountHistogram)> = match execution {
        Execution::Serial => starts.into_iter().map(chunk).collect(),
        Execution::Parallel => starts.into_par_iter().map(chunk).collect(),
    };
    let mut hist = CountHistogram::uniform(0.0, gate, bins);
    let mut tally = Tally::default();
    for (t, h) in &parts {
        tally = tally.add(*t);
        hist.merge(h);
    }
    (tally, hist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    /// Detected counts per phase.
    pub scan: FringeScan,
    /// Exact expected counts per phase, for comparison.
    pub expected: Vec<f64>,
    pub heralded: Vec<u64>,
    pub dark: Vec<u64>,
    /// Arrival times of every detection, all phases pooled.
    pub histogram: CountHistogram,
}

/// Runs `trials_per_phase` trials at each grid phase. Trial `k` at phase
/// index `j` uses stream index `j * trials_per_phase + k`.
pub fn run_experiment(
    config: &InterferometerConfig,
    phase_grid: &[f64],
    trials_per_phase: u64,
    seed: &SeedSpec,
    execution: Execution,
) -> Result<ExperimentOutput> {
    if trials_per_phase == 0 {
        return Err(Error::InvalidInput(
            "trials_per_phase must be positive".into(),
        ));
    }
    check_phase_grid(phase_grid)?;
    let engine = Interferometer::new(*config)?;
    let key = seed.key();
    let gate = config.detector.gate_window;
    let mut histogram = CountHistogram::uniform(0.0, gate, DEFAULT_HISTOGRAM_BINS);
    let mut counts = Vec::with_capacity(phase_grid.len());
    let mut expected = Vec::with_capacity(phase_grid.len());
    let mut heralded = Vec::with_capacity(phase_grid.len());
    let mut dark = Vec::with_capacity(phase_grid.len());
    for (j, &phi) in phase_grid.iter().enumerate() {
        let model = TrialModel::new(&engine, phi);
        let (tally, hist) = run_block(
            &model,
            &key,
            j as u64 * trials_per_phase,
            trials_per_phase,
            gate,
            DEFAULT_HISTOGRAM_BINS,
            execution,
        );
        counts.push(tally.detections as f64);
        expected.push(model.detection_fraction() * trials_per_phase as f64);
        heralded.push(tally.heralded);
        dark.push(tally.dark);
        histogram.merge(&hist);
    }
    Ok(ExperimentOutput {
        scan: FringeScan::new(
            phase_grid.to_vec(),
            counts,
            (trials_per_phase * phase_grid.len() as u64) as f64,
        )?,
        expected,
        heralded,
        dark,
        histogram,
    })
}

/// Time-resolved counts at one phase.
pub fn time_histogram(
    config: &InterferometerConfig,
    phi: f64,
    trials: u64,
    bins: usize,
    seed: &SeedSpec,
    execution: Execution,
) -> Result<CountHistogram> {
    if trials == 0 || bins == 0 {
        return Err(Error::InvalidInput("trials and bins must be positive".into()));
    }
    let engine = Interferometer::new(*config)?;
    let model = TrialModel::new(&engine, phi);
    let (_, hist) = run_block(
        &model,
        &seed.key(),
        0,
        trials,
        config.detector.gate_window,
        bins,
        execution,
    );
    Ok(hist)
}

/// What a storage-time scan reads out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayTarget {
    /// First memory alone: store, wait, retrieve.
    Memory1,
    /// Second memory alone, fed the full photon.
    Memory2,
    /// Closed interferometer at zero EOM phase, both memories storing for
    /// the scanned time.
    Interferometer,
}

impl DecayTarget {
    pub fn name(&self) -> &'static str {
        match self {
            DecayTarget::Memory1 => "memory1",
            DecayTarget::Memory2 => "memory2",
            DecayTarget::Interferometer => "interferometer",
        }
    }

    /// The apparatus as configured for one scan point.
    pub fn configure(&self, base: &InterferometerConfig, storage_time: f64) -> InterferometerConfig {
        let mut c = base.with_mode(QrngMode::Ensemble).with_eom_phase(0.0);
        match self {
            DecayTarget::Memory1 => {
                c.mbs1.storage_time = storage_time;
                c.qrng.xi = 0.0;
            }
            DecayTarget::Memory2 => {
                c.mbs1.eta_con = 0.0;
                c.mbs2.storage_time = storage_time;
                c.qrng.xi = 1.0;
                c.overlap = OverlapSpec::fixed(num_complex::Complex64::new(1.0, 0.0));
            }
            DecayTarget::Interferometer => {
                c.mbs1.storage_time = storage_time;
                c.mbs2.storage_time = storage_time;
            }
        }
        c
    }
}

/// Detected counts versus storage time. Point `j` uses substream `j` of
/// `seed`.
pub fn decoherence_scan(
    config: &InterferometerConfig,
    storage_time_grid: &[f64],
    trials: u64,
    seed: &SeedSpec,
    target: DecayTarget,
    execution: Execution,
) -> Result<Vec<(f64, u64)>> {
    if storage_time_grid.is_empty() {
        return Err(Error::InvalidInput("empty storage-time grid".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be positive".into()));
    }
    storage_time_grid
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let engine = Interferometer::new(target.configure(config, t))?;
            let model = TrialModel::new(&engine, 0.0);
            let key = seed.derive(j as u64).key();
            let (tally, _) = run_block(
                &model,
                &key,
                0,
                trials,
                config.detector.gate_window,
                1,
                execution,
            );
            Ok((t, tally.detections))
        })
        .collect()
}

/// Exact mean counts of [`decoherence_scan`].
pub fn decoherence_expected(
    config: &InterferometerConfig,
    storage_time_grid: &[f64],
    trials: u64,
    target: DecayTarget,
) -> Result<Vec<(f64, f64)>> {
    storage_time_grid
        .iter()
        .map(|&t| {
            let engine = Interferometer::new(target.configure(config, t))?;
            Ok((
                t,
                TrialModel::new(&engine, 0.0).detection_fraction() * trials as f64,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qrng_extremes() {
        let mut rng = SeedSpec::new(1).trial_stream(0);
        for _ in 0..1000 {
            assert_eq!(sample_qrng(1.0, &mut rng), QrngBranch::In);
            assert_eq!(sample_qrng(0.0, &mut rng), QrngBranch::Out);
        }
    }

    #[test]
    fn streams_depend_only_on_seed_and_index() {
        let s = SeedSpec::new(42);
        let a: u64 = s.trial_stream(7).random();
        let b: u64 = s.trial_stream(7).random();
        let c: u64 = s.trial_stream(8).random();
        let d: u64 = s.derive(1).trial_stream(7).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn blind_detector_never_clicks() {
        let mut c = InterferometerConfig::default();
        c.detector.efficiency = 0.0;
        c.detector.dark_rate = 0.0;
        let e = Interferometer::new(c).unwrap();
        let recs = trial_records(&e, 0.0, 0, 10_000, &SeedSpec::new(3));
        assert!(recs.iter().all(|r| r.detection.is_none()));
        assert!(recs.iter().all(|r| r.herald_fired == r.qrng_outcome.is_some()));
    }

    #[test]
    fn zero_trials_is_an_error() {
        let c = InterferometerConfig::default();
        assert!(run_experiment(&c, &[0.0], 0, &SeedSpec::new(0), Execution::Serial).is_err());
        assert!(decoherence_scan(&c, &[], 10, &SeedSpec::new(0), DecayTarget::Memory1, Execution::Serial).is_err());
    }

    #[test]
    fn histogram_binning() {
        let mut h = CountHistogram::uniform(0.0, 10.0, 5);
        for t in [0.0, 1.9, 2.0, 9.99, 10.0, -1.0] {
            h.record(t);
        }
        assert_eq!(h.counts, vec![2, 1, 0, 0, 1]);
    }

    #[test]
    fn records_serialize_one_per_line() {
        let e = Interferometer::new(InterferometerConfig::default()).unwrap();
        let recs = trial_records(&e, 0.0, 5, 3, &SeedSpec::new(9));
        let mut buf = Vec::new();
        write_records(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let back: TrialRecord = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(back, recs[0]);
        assert_eq!(back.trial_index, 5);
    }
}
