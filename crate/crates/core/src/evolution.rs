//! Complex-amplitude bookkeeping of a single photon through the two memory
//! beam splitters, and the resulting fringe and visibility.
//!
//! The photon is tracked as a list of labelled branches. Each stage moves
//! amplitude between branches; whatever a stage removes (imperfect read-out,
//! decoherence, the QRNG mixture in amplitude mode) is booked as `loss`, so
//! `sum |a|^2 + loss == 1` holds after every stage.
//!
//! Detection happens in the retrieved window, where the two read-out branches
//! interfere: `P = |A1 + zeta * A2|^2` with `zeta` the overlap of the two
//! retrieved packets.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::model::{validate, InterferometerConfig, OverlapSpec, QrngMode};
use crate::temporal::{decoherence_factor, overlap};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchLabel {
    Leaked,
    SpinWave1,
    Retrieved1,
    SpinWave2,
    Retrieved2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub label: BranchLabel,
    pub amplitude: Complex64,
    /// Delay relative to the leaked pulse, in ns. The fiber between the
    /// memories is common to every branch and does not appear here.
    pub time_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BranchState {
    pub branches: Vec<Branch>,
    pub loss: f64,
}

impl BranchState {
    pub fn get(&self, label: BranchLabel) -> Option<&Branch> {
        self.branches.iter().find(|b| b.label == label)
    }

    pub fn amplitude(&self, label: BranchLabel) -> Complex64 {
        self.get(label)
            .map(|b| b.amplitude)
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    /// `sum |a|^2 + loss`
    pub fn norm(&self) -> f64 {
        self.branches
            .iter()
            .map(|b| b.amplitude.norm_sqr())
            .sum::<f64>()
            + self.loss
    }

    /// Probability of a click in the retrieved window given the mode overlap
    /// between the two read-out packets.
    pub fn retrieved_probability(&self, zeta: Complex64) -> f64 {
        (self.amplitude(BranchLabel::Retrieved1) + zeta * self.amplitude(BranchLabel::Retrieved2))
            .norm_sqr()
    }

    fn replace(&mut self, label: BranchLabel, with: Vec<Branch>) -> Option<Branch> {
        let idx = self.branches.iter().position(|b| b.label == label)?;
        let old = self.branches.remove(idx);
        let before: f64 = with.iter().map(|b| b.amplitude.norm_sqr()).sum();
        self.loss += old.amplitude.norm_sqr() - before;
        for (k, b) in with.into_iter().enumerate() {
            self.branches.insert(idx + k, b);
        }
        Some(old)
    }
}

/// Whether the QRNG switched the second memory in for a given trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QrngBranch {
    In,
    Out,
}

/// Phase grid with expected or counted detections per phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeScan {
    pub phases: Vec<f64>,
    pub values: Vec<f64>,
    pub total_n: f64,
}

impl FringeScan {
    pub fn new(phases: Vec<f64>, values: Vec<f64>, total_n: f64) -> Result<Self> {
        if phases.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "fringe has {} phases but {} values",
                phases.len(),
                values.len()
            )));
        }
        check_phase_grid(&phases)?;
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "fringe values must be nonnegative, got {v}"
            )));
        }
        Ok(Self {
            phases,
            values,
            total_n,
        })
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}

pub(crate) fn check_phase_grid(phases: &[f64]) -> Result<()> {
    if phases.is_empty() {
        return Err(Error::InvalidInput("empty phase grid".into()));
    }
    if phases.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidInput("non-finite phase in grid".into()));
    }
    if phases.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "phase grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// `n + 1` equally spaced phases from `start` to `end` inclusive.
pub fn phase_grid(start: f64, end: f64, steps: usize) -> Vec<f64> {
    if steps == 0 {
        return vec![start];
    }
    (0..=steps)
        .map(|k| start + (end - start) * k as f64 / steps as f64)
        .collect()
}

/// A validated configuration together with the mode overlap of its two
/// retrieved packets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interferometer {
    config: InterferometerConfig,
    zeta: Complex64,
}

impl Interferometer {
    /// Validates `config` and resolves the overlap factor, integrating the
    /// two packets if the config asks for it.
    pub fn new(config: InterferometerConfig) -> Result<Self> {
        let config = validate(config)?;
        let zeta = match config.overlap {
            OverlapSpec::Fixed { re, im } => Complex64::new(re, im),
            OverlapSpec::Computed => {
                overlap(
                    &config.mbs1.retrieved_packet,
                    &config.mbs2.retrieved_packet,
                    config.mbs2.storage_time - config.mbs1.storage_time,
                )?
                .zeta
            }
        };
        Ok(Self { config, zeta })
    }

    /// Like [`Interferometer::new`] but with the overlap given directly.
    pub fn with_overlap(config: InterferometerConfig, zeta: Complex64) -> Result<Self> {
        let config = validate(config)?;
        if !(zeta.norm() <= 1.0 + 1e-9) {
            return Err(Error::InvalidInput(format!(
                "mode overlap magnitude {} exceeds 1",
                zeta.norm()
            )));
        }
        Ok(Self { config, zeta })
    }

    pub fn config(&self) -> &InterferometerConfig {
        &self.config
    }

    pub fn zeta(&self) -> Complex64 {
        self.zeta
    }

    pub fn split_at_mbs1(&self) -> BranchState {
        let m = &self.config.mbs1;
        let (theta1, _) = self.carrier_phases();
        BranchState {
            branches: vec![
                Branch {
                    label: BranchLabel::Leaked,
                    amplitude: Complex64::new((1.0 - m.eta_con).sqrt(), 0.0),
                    time_offset: 0.0,
                },
                Branch {
                    label: BranchLabel::SpinWave1,
                    amplitude: Complex64::from_polar(m.eta_con.sqrt(), theta1),
                    time_offset: 0.0,
                },
            ],
            loss: 0.0,
        }
    }

    pub fn retrieve_and_phase_mbs1(&self, state: BranchState) -> BranchState {
        self.retrieve_mbs1_at(state, self.config.eom_phase)
    }

    fn retrieve_mbs1_at(&self, mut state: BranchState, eom_phase: f64) -> BranchState {
        let m = &self.config.mbs1;
        let Some(spin) = state.get(BranchLabel::SpinWave1).copied() else {
            return state;
        };
        let scale = (m.eta_stored * decoherence_factor(m.storage_time, m.coherence_time_t1)).sqrt();
        let retrieved = Branch {
            label: BranchLabel::Retrieved1,
            amplitude: spin.amplitude * Complex64::from_polar(scale, eom_phase),
            time_offset: spin.time_offset + m.storage_time,
        };
        state.replace(BranchLabel::SpinWave1, vec![retrieved]);
        state
    }

    /// Second memory acting on the leaked branch. With `Out` the state passes
    /// untouched. In amplitude mode the split carries the QRNG weight as
    /// `xi * (transmitted + converted) + (1 - xi) * leaked`.
    pub fn split_at_mbs2(&self, mut state: BranchState, qrng_branch: QrngBranch) -> BranchState {
        if qrng_branch == QrngBranch::Out {
            return state;
        }
        let Some(leaked) = state.get(BranchLabel::Leaked).copied() else {
            return state;
        };
        let m = &self.config.mbs2;
        let (_, theta2) = self.carrier_phases();
        let xi = match self.config.qrng.mode {
            QrngMode::Amplitude => self.config.qrng.xi,
            QrngMode::Ensemble => 1.0,
        };
        let transmitted = xi * (1.0 - m.eta_con).sqrt() + (1.0 - xi);
        let converted = Complex64::from_polar(xi * m.eta_con.sqrt(), theta2);
        state.replace(
            BranchLabel::Leaked,
            vec![
                Branch {
                    amplitude: leaked.amplitude * transmitted,
                    ..leaked
                },
                Branch {
                    label: BranchLabel::SpinWave2,
                    amplitude: leaked.amplitude * converted,
                    time_offset: leaked.time_offset,
                },
            ],
        );
        state
    }

    pub fn retrieve_mbs2(&self, mut state: BranchState) -> BranchState {
        let m = &self.config.mbs2;
        let Some(spin) = state.get(BranchLabel::SpinWave2).copied() else {
            return state;
        };
        let scale = (m.eta_stored * decoherence_factor(m.storage_time, m.coherence_time_t1)).sqrt();
        state.replace(
            BranchLabel::SpinWave2,
            vec![Branch {
                label: BranchLabel::Retrieved2,
                amplitude: spin.amplitude * scale,
                time_offset: spin.time_offset + m.storage_time,
            }],
        );
        state
    }

    /// Runs the full chain at the config's EOM phase.
    pub fn evolve(&self, qrng_branch: QrngBranch) -> BranchState {
        self.evolve_at(self.config.eom_phase, qrng_branch)
    }

    pub fn evolve_at(&self, eom_phase: f64, qrng_branch: QrngBranch) -> BranchState {
        let s = self.split_at_mbs1();
        let s = self.retrieve_mbs1_at(s, eom_phase);
        let s = self.split_at_mbs2(s, qrng_branch);
        self.retrieve_mbs2(s)
    }

    /// Retrieved-window click probability for one QRNG outcome. In amplitude
    /// mode the `In` chain already carries the QRNG weight.
    pub fn branch_probability(&self, phi: f64, qrng_branch: QrngBranch) -> f64 {
        self.evolve_at(phi, qrng_branch)
            .retrieved_probability(self.zeta)
    }

    /// Retrieved-window click probability at EOM phase `phi`, before detector
    /// efficiency.
    pub fn detection_probability(&self, phi: f64) -> f64 {
        match self.config.qrng.mode {
            QrngMode::Amplitude => self.branch_probability(phi, QrngBranch::In),
            QrngMode::Ensemble => {
                let xi = self.config.qrng.xi;
                xi * self.branch_probability(phi, QrngBranch::In)
                    + (1.0 - xi) * self.branch_probability(phi, QrngBranch::Out)
            }
        }
    }

    /// `N * P(phi)` on each grid phase.
    pub fn fringe(&self, phase_grid: &[f64]) -> Result<FringeScan> {
        check_phase_grid(phase_grid)?;
        let n = self.config.source.total_counts;
        let values = phase_grid
            .iter()
            .map(|&phi| n * self.detection_probability(phi))
            .collect();
        FringeScan::new(phase_grid.to_vec(), values, n)
    }

    /// Closed-form fringe visibility.
    pub fn visibility(&self) -> f64 {
        let c = &self.config;
        let early = c.mbs1.effective_total().sqrt();
        let late = ((1.0 - c.mbs1.eta_con) * c.mbs2.effective_total()).sqrt() * self.zeta.norm();
        let xi = c.qrng.xi;
        let (num, den) = match c.qrng.mode {
            QrngMode::Amplitude => (2.0 * xi * early * late, early.powi(2) + (xi * late).powi(2)),
            QrngMode::Ensemble => (2.0 * xi * early * late, early.powi(2) + xi * late.powi(2)),
        };
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// Phase of the fringe maximum.
    pub fn phase_of_maximum(&self) -> f64 {
        let (theta1, theta2) = self.carrier_phases();
        (theta2 - theta1 + self.zeta.arg()).rem_euclid(std::f64::consts::TAU)
    }

    fn carrier_phases(&self) -> (f64, f64) {
        self.config
            .carrier_phase
            .phases(self.config.mbs1.storage_time, self.config.mbs2.storage_time)
    }
}

pub fn split_at_mbs1(config: &InterferometerConfig) -> Result<BranchState> {
    Ok(Interferometer::new(*config)?.split_at_mbs1())
}

pub fn detection_probability(config: &InterferometerConfig, phi: f64) -> Result<f64> {
    Ok(Interferometer::new(*config)?.detection_probability(phi))
}

pub fn fringe(config: &InterferometerConfig, phase_grid: &[f64]) -> Result<FringeScan> {
    Interferometer::new(*config)?.fringe(phase_grid)
}

pub fn visibility_analytic(config: &InterferometerConfig) -> Result<f64> {
    Ok(Interferometer::new(*config)?.visibility())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::model::{CarrierPhase, MemoryBeamSplitter};

    fn fig2(xi: f64) -> InterferometerConfig {
        let mut c = InterferometerConfig::default()
            .with_xi(xi)
            .with_overlap(OverlapSpec::fixed(Complex64::new(1.0, 0.0)));
        c.mbs1 = MemoryBeamSplitter::from_total(0.850, 0.133, 200.0);
        c.mbs2 = MemoryBeamSplitter::from_total(0.850, 0.24, 200.0);
        c
    }

    fn engine(c: InterferometerConfig) -> Interferometer {
        Interferometer::new(c).unwrap()
    }

    #[test]
    fn first_split_amplitudes() {
        let s = engine(fig2(1.0)).split_at_mbs1();
        assert!((s.amplitude(BranchLabel::Leaked).norm() - 0.387_298_3).abs() < 1e-6);
        assert!((s.amplitude(BranchLabel::SpinWave1).norm() - 0.921_954_4).abs() < 1e-6);

        let mut c = fig2(1.0);
        c.mbs1.eta_con = 0.0;
        c.mbs1.eta_stored = 0.0;
        let s = engine(c).split_at_mbs1();
        assert_eq!(s.amplitude(BranchLabel::Leaked).norm(), 1.0);
        assert_eq!(s.amplitude(BranchLabel::SpinWave1).norm(), 0.0);

        c.mbs1.eta_con = 1.0;
        let s = engine(c).split_at_mbs1();
        assert_eq!(s.amplitude(BranchLabel::Leaked).norm(), 0.0);
        assert_eq!(s.amplitude(BranchLabel::SpinWave1).norm(), 1.0);
    }

    #[test]
    fn first_retrieval() {
        let e = engine(fig2(1.0));
        let s = e.retrieve_and_phase_mbs1(e.split_at_mbs1());
        let r1 = s.get(BranchLabel::Retrieved1).unwrap();
        assert!((r1.amplitude.norm() - 0.364_691_6).abs() < 1e-6);
        assert_eq!(r1.time_offset, 200.0);
        assert!(s.get(BranchLabel::SpinWave1).is_none());

        let mut c = fig2(1.0);
        c.mbs1.eta_stored = 0.0;
        let e0 = engine(c);
        let s = e0.retrieve_and_phase_mbs1(e0.split_at_mbs1());
        assert_eq!(s.amplitude(BranchLabel::Retrieved1).norm(), 0.0);
        assert!((s.loss - 0.85).abs() < 1e-15);

        let flipped = engine(fig2(1.0).with_eom_phase(PI));
        let sf = flipped.retrieve_and_phase_mbs1(flipped.split_at_mbs1());
        let a0 = e.retrieve_and_phase_mbs1(e.split_at_mbs1()).amplitude(BranchLabel::Retrieved1);
        assert!((sf.amplitude(BranchLabel::Retrieved1) + a0).norm() < 1e-15);
    }

    #[test]
    fn second_split_cases() {
        let e = engine(fig2(1.0));
        let before = e.retrieve_and_phase_mbs1(e.split_at_mbs1());
        let after = e.split_at_mbs2(before.clone(), QrngBranch::In);
        let ratio = after.amplitude(BranchLabel::Leaked) / before.amplitude(BranchLabel::Leaked);
        assert!((ratio.re - (1.0f64 - 0.85).sqrt()).abs() < 1e-15);

        let out = e.split_at_mbs2(before.clone(), QrngBranch::Out);
        assert_eq!(out, before);
    }

    #[test]
    fn second_split_amplitude_mode_keeps_both_qrng_terms() {
        // xi = 0.5, eta1con = 0.85, eta2con = 0.85
        let e = engine(fig2(0.5));
        let s = e.split_at_mbs2(e.retrieve_and_phase_mbs1(e.split_at_mbs1()), QrngBranch::In);
        let a_l = 0.15f64.sqrt();
        let leaked = a_l * (0.5 * 0.15f64.sqrt() + 0.5);
        let spin2 = a_l * 0.5 * 0.85f64.sqrt();
        assert!((s.amplitude(BranchLabel::Leaked).re - leaked).abs() < 1e-15);
        assert!((s.amplitude(BranchLabel::SpinWave2).re - spin2).abs() < 1e-15);
        assert!((s.norm() - 1.0).abs() < 1e-12);
        assert!(s.loss > 0.0);
    }

    #[test]
    fn second_retrieval_timing_and_phase() {
        let e = engine(fig2(1.0));
        let s = e.evolve(QrngBranch::In);
        assert_eq!(
            s.get(BranchLabel::Retrieved1).unwrap().time_offset,
            s.get(BranchLabel::Retrieved2).unwrap().time_offset
        );

        let mut c = fig2(1.0);
        c.mbs2.eta_stored = 0.0;
        assert_eq!(engine(c).evolve(QrngBranch::In).amplitude(BranchLabel::Retrieved2).norm(), 0.0);

        let mut c = fig2(1.0);
        c.carrier_phase = CarrierPhase::Suppressed { residual: 0.7 };
        let s = engine(c).evolve(QrngBranch::In);
        let rel = s.amplitude(BranchLabel::Retrieved2).arg() - s.amplitude(BranchLabel::Retrieved1).arg();
        assert!((rel - 0.7).abs() < 1e-12);

        let mut c = fig2(1.0);
        c.carrier_phase = CarrierPhase::Carrier { angular_frequency: 0.01 };
        c.mbs2.storage_time = 230.0;
        let s = engine(c).evolve(QrngBranch::In);
        let rel = s.amplitude(BranchLabel::Retrieved2).arg() - s.amplitude(BranchLabel::Retrieved1).arg();
        assert!((rel - 0.3).abs() < 1e-12);
        assert_eq!(s.get(BranchLabel::Retrieved2).unwrap().time_offset, 230.0);
    }

    #[test]
    fn detection_examples() {
        let e = engine(fig2(1.0));
        let p0 = e.detection_probability(0.0);
        let pi = e.detection_probability(PI);
        let a = 0.133f64.sqrt();
        let b = (0.15f64 * 0.24).sqrt();
        assert!((p0 - (a + b).powi(2)).abs() < 1e-14);
        assert!((pi - (a - b).powi(2)).abs() < 1e-14);
        assert!((611.0 * p0 - 187.8).abs() < 0.1);
        assert!((611.0 * pi - 18.7).abs() < 0.1);

        let open = engine(fig2(0.0));
        for phi in phase_grid(0.0, 2.0 * PI, 16) {
            assert!((open.detection_probability(phi) - 0.133).abs() < 1e-15);
        }
    }

    #[test]
    fn fringe_examples() {
        let grid = phase_grid(0.0, 2.0 * PI, 8);
        assert_eq!(grid.len(), 9);
        let scan = engine(fig2(1.0)).fringe(&grid).unwrap();
        let max = scan.values.iter().cloned().fold(f64::MIN, f64::max);
        let min = scan.values.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - 187.8).abs() < 0.1 && (min - 18.7).abs() < 0.1);

        let flat = engine(fig2(0.0)).fringe(&grid).unwrap();
        assert!(flat.values.iter().all(|v| (v - flat.values[0]).abs() < 1e-12));

        let one = engine(fig2(1.0)).fringe(&[0.3]).unwrap();
        assert_eq!(one.values, vec![611.0 * engine(fig2(1.0)).detection_probability(0.3)]);

        assert!(engine(fig2(1.0)).fringe(&[]).is_err());
        assert!(engine(fig2(1.0)).fringe(&[1.0, 0.5]).is_err());
    }

    #[test]
    fn visibility_examples() {
        let mut c = fig2(1.0);
        c.mbs1 = MemoryBeamSplitter::from_total(0.850, 0.122, 200.0);
        c.mbs2 = MemoryBeamSplitter::from_total(0.850, 0.331, 200.0);
        let v = engine(c).visibility();
        assert!((v - 0.9068).abs() < 5e-5, "{v}");

        assert_eq!(engine(c.with_eta2_total(0.0)).visibility(), 0.0);

        let e = engine(fig2(0.5).with_mode(QrngMode::Ensemble));
        assert!((e.detection_probability(0.0) - 0.22020).abs() < 1e-5);
        assert!((e.detection_probability(PI) - 0.08181).abs() < 1e-5);
        assert!((e.visibility() - 0.4582).abs() < 1e-4);
    }
}
