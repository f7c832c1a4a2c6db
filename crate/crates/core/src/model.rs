//! Domain types for the two-memory interferometer and their invariants.
//!
//! All durations are in nanoseconds unless the field name says otherwise,
//! rates are in Hz, and efficiencies are plain probabilities.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::temporal::{PacketShape, WavePacket};

/// One quantum-memory beam splitter.
///
/// A fraction `eta_con` of the incoming field is written into a spin wave,
/// the rest leaks through. After `storage_time` the spin wave is read out
/// with efficiency `eta_stored`, further reduced by spin-wave decoherence
/// with time constant `coherence_time_t1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryBeamSplitter {
    pub eta_con: f64,
    pub eta_stored: f64,
    pub storage_time: f64,
    /// Intensity decay constant of the stored spin wave. `inf` disables
    /// decoherence, which is how efficiencies measured at the operating
    /// storage time are entered.
    #[serde(with = "float_or_inf")]
    pub coherence_time_t1: f64,
    pub retrieved_packet: WavePacket,
}

impl MemoryBeamSplitter {
    /// Builds a memory from the write-in efficiency and the total
    /// (write-in times read-out) efficiency, the pair that is usually
    /// reported for an experiment.
    pub fn from_total(eta_con: f64, eta_total: f64, storage_time: f64) -> Self {
        let eta_stored = if eta_con > 0.0 { eta_total / eta_con } else { 0.0 };
        Self {
            eta_con,
            eta_stored,
            storage_time,
            coherence_time_t1: f64::INFINITY,
            retrieved_packet: WavePacket::default(),
        }
    }

    pub fn with_coherence_time(mut self, t1: f64) -> Self {
        self.coherence_time_t1 = t1;
        self
    }

    pub fn with_packet(mut self, packet: WavePacket) -> Self {
        self.retrieved_packet = packet;
        self
    }

    pub fn with_storage_time(mut self, storage_time: f64) -> Self {
        self.storage_time = storage_time;
        self
    }

    /// Write-in times read-out efficiency, without decoherence.
    pub fn total_efficiency(&self) -> f64 {
        total_efficiency(self)
    }

    /// Read-out efficiency after decoherence over the configured storage time.
    pub fn effective_stored(&self) -> f64 {
        self.eta_stored
            * crate::temporal::decoherence_factor(self.storage_time, self.coherence_time_t1)
    }

    /// Total efficiency including decoherence at the configured storage time.
    pub fn effective_total(&self) -> f64 {
        self.eta_con * self.effective_stored()
    }

    fn check(&self, name: &str, out: &mut Vec<Violation>) {
        check_probability(out, &format!("{name}.eta_con"), self.eta_con);
        check_probability(out, &format!("{name}.eta_stored"), self.eta_stored);
        if !(self.storage_time >= 0.0 && self.storage_time.is_finite()) {
            out.push(Violation::new(
                format!("{name}.storage_time"),
                format!("negative or non-finite duration ({})", self.storage_time),
            ));
        }
        if !(self.coherence_time_t1 > 0.0) {
            out.push(Violation::new(
                format!("{name}.coherence_time_t1"),
                format!("nonpositive coherence time ({})", self.coherence_time_t1),
            ));
        }
        self.retrieved_packet
            .check(&format!("{name}.retrieved_packet"), out);
    }
}

/// `eta_con * eta_stored`.
pub fn total_efficiency(m: &MemoryBeamSplitter) -> f64 {
    m.eta_con * m.eta_stored
}

/// How the QRNG weight enters the analytic prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QrngMode {
    /// The weight multiplies the second-memory amplitude, as in the fitted
    /// fringe formula.
    #[default]
    Amplitude,
    /// The weight mixes closed and open interferometer probabilities, as a
    /// classical mixture of "inserted" and "removed" trials.
    Ensemble,
}

impl fmt::Display for QrngMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QrngMode::Amplitude => "amplitude",
            QrngMode::Ensemble => "ensemble",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QrngSpec {
    /// Probability that the second memory is switched in.
    pub xi: f64,
    #[serde(default)]
    pub mode: QrngMode,
}

impl Default for QrngSpec {
    fn default() -> Self {
        Self {
            xi: 1.0,
            mode: QrngMode::Amplitude,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub efficiency: f64,
    /// Dark counts per second.
    pub dark_rate: f64,
    pub gate_window: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            efficiency: 0.60,
            dark_rate: 25.0,
            gate_window: 500.0,
        }
    }
}

impl DetectorModel {
    /// Probability of at least one dark count inside one gate.
    pub fn dark_probability(&self) -> f64 {
        -(-self.dark_rate * self.gate_window * 1e-9).exp_m1()
    }
}

/// Source of the optical carrier phase picked up during storage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CarrierPhase {
    /// First-memory phase fixed to zero; `residual` is the second memory's
    /// phase relative to the first.
    Suppressed {
        #[serde(default)]
        residual: f64,
    },
    /// Phase accumulated as carrier angular frequency times storage time.
    Carrier {
        /// rad/ns
        angular_frequency: f64,
    },
}

impl Default for CarrierPhase {
    fn default() -> Self {
        CarrierPhase::Suppressed { residual: 0.0 }
    }
}

impl CarrierPhase {
    /// `(theta1, theta2)` for the given storage times.
    pub fn phases(&self, storage1: f64, storage2: f64) -> (f64, f64) {
        match *self {
            CarrierPhase::Suppressed { residual } => (0.0, residual),
            CarrierPhase::Carrier { angular_frequency } => {
                (angular_frequency * storage1, angular_frequency * storage2)
            }
        }
    }
}

/// Where the mode-overlap factor between the two retrieved packets comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OverlapSpec {
    /// Integrate the two retrieved packets.
    #[default]
    Computed,
    /// Use a fixed complex overlap.
    Fixed { re: f64, im: f64 },
}

impl OverlapSpec {
    pub fn fixed(zeta: Complex64) -> Self {
        OverlapSpec::Fixed {
            re: zeta.re,
            im: zeta.im,
        }
    }
}

/// Heralded-photon source: how often a trial carries a signal photon and the
/// fitted count scale used by the analytic engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceModel {
    /// Probability that a trial window is heralded. Never reported by the
    /// experiment; a free parameter.
    pub herald_probability: f64,
    /// Count normalization `N` of the analytic fringe.
    pub total_counts: f64,
}

impl Default for SourceModel {
    fn default() -> Self {
        Self {
            herald_probability: 1.0,
            total_counts: 611.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSequence {
    pub repetition_rate: f64,
    /// ms
    pub trap_duration: f64,
    /// ms
    pub experiment_window: f64,
}

impl Default for TimingSequence {
    fn default() -> Self {
        Self {
            repetition_rate: 100.0,
            trap_duration: 8.7,
            experiment_window: 1.3,
        }
    }
}

impl TimingSequence {
    /// Number of heralding gates of the given length that fit in one
    /// experiment window.
    pub fn gates_per_cycle(&self, gate_window_ns: f64) -> u64 {
        (self.experiment_window * 1e6 / gate_window_ns).floor() as u64
    }

    fn check(&self, out: &mut Vec<Violation>) {
        if !(self.repetition_rate > 0.0) {
            out.push(Violation::new(
                "timing.repetition_rate",
                format!("nonpositive rate ({})", self.repetition_rate),
            ));
            return;
        }
        if !(self.trap_duration >= 0.0 && self.experiment_window >= 0.0) {
            out.push(Violation::new(
                "timing",
                "negative trap or experiment duration".to_string(),
            ));
            return;
        }
        let period_ms = 1e3 / self.repetition_rate;
        let used = self.trap_duration + self.experiment_window;
        if used > period_ms * (1.0 + 1e-9) {
            out.push(Violation::new(
                "timing",
                format!(
                    "inconsistent timing sequence: trap + window = {used} ms exceeds period {period_ms} ms"
                ),
            ));
        }
    }
}

/// The whole apparatus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferometerConfig {
    pub mbs1: MemoryBeamSplitter,
    pub mbs2: MemoryBeamSplitter,
    #[serde(default)]
    pub eom_phase: f64,
    #[serde(default = "default_fiber_delay")]
    pub fiber_delay: f64,
    #[serde(default)]
    pub qrng: QrngSpec,
    #[serde(default)]
    pub detector: DetectorModel,
    #[serde(default)]
    pub carrier_phase: CarrierPhase,
    #[serde(default)]
    pub overlap: OverlapSpec,
    #[serde(default)]
    pub source: SourceModel,
    #[serde(default)]
    pub timing: TimingSequence,
}

fn default_fiber_delay() -> f64 {
    1000.0
}

/// Retrieved-packet intensity time constants, calibrated so the interference
/// window spans roughly 160-280 ns of second-memory storage around the 200 ns
/// match point.
pub const DEFAULT_PACKET1_WIDTH: f64 = 12.0;
pub const DEFAULT_PACKET2_WIDTH: f64 = 8.0;

impl Default for InterferometerConfig {
    /// Closed interferometer with the efficiencies of the ξ-sweep data set,
    /// 200 ns storage in both memories and the calibrated default packets.
    fn default() -> Self {
        let packet = |width| WavePacket {
            shape: PacketShape::ExponentialDecay,
            center: 0.0,
            width,
        };
        Self {
            mbs1: MemoryBeamSplitter::from_total(0.850, 0.133, 200.0)
                .with_packet(packet(DEFAULT_PACKET1_WIDTH)),
            // Only the product 0.24 is known for the second memory; write-in is
            // taken equal to the first memory's.
            mbs2: MemoryBeamSplitter::from_total(0.850, 0.24, 200.0)
                .with_packet(packet(DEFAULT_PACKET2_WIDTH)),
            eom_phase: 0.0,
            fiber_delay: default_fiber_delay(),
            qrng: QrngSpec::default(),
            detector: DetectorModel::default(),
            carrier_phase: CarrierPhase::default(),
            overlap: OverlapSpec::Computed,
            source: SourceModel::default(),
            timing: TimingSequence::default(),
        }
    }
}

impl InterferometerConfig {
    pub fn with_xi(mut self, xi: f64) -> Self {
        self.qrng.xi = xi;
        self
    }

    pub fn with_mode(mut self, mode: QrngMode) -> Self {
        self.qrng.mode = mode;
        self
    }

    pub fn with_eom_phase(mut self, phase: f64) -> Self {
        self.eom_phase = phase;
        self
    }

    pub fn with_overlap(mut self, overlap: OverlapSpec) -> Self {
        self.overlap = overlap;
        self
    }

    /// Sets the second memory's total efficiency, keeping its write-in
    /// efficiency fixed.
    pub fn with_eta2_total(mut self, eta2: f64) -> Self {
        self.mbs2 = MemoryBeamSplitter {
            eta_stored: if self.mbs2.eta_con > 0.0 {
                eta2 / self.mbs2.eta_con
            } else {
                0.0
            },
            ..self.mbs2
        };
        self
    }

    pub fn validate(self) -> Result<Self, ValidationError> {
        validate(self)
    }
}

/// Returns the config unchanged if every invariant holds, otherwise the full
/// list of violations.
pub fn validate(config: InterferometerConfig) -> Result<InterferometerConfig, ValidationError> {
    let mut out = Vec::new();
    config.mbs1.check("mbs1", &mut out);
    config.mbs2.check("mbs2", &mut out);
    if !config.eom_phase.is_finite() {
        out.push(Violation::new("eom_phase", "non-finite phase".to_string()));
    }
    if !(config.fiber_delay >= 0.0 && config.fiber_delay.is_finite()) {
        out.push(Violation::new(
            "fiber_delay",
            format!("negative or non-finite duration ({})", config.fiber_delay),
        ));
    }
    check_probability(&mut out, "qrng.xi", config.qrng.xi);
    check_probability(&mut out, "detector.efficiency", config.detector.efficiency);
    if !(config.detector.dark_rate >= 0.0 && config.detector.dark_rate.is_finite()) {
        out.push(Violation::new(
            "detector.dark_rate",
            format!("negative dark rate ({})", config.detector.dark_rate),
        ));
    }
    if !(config.detector.gate_window > 0.0 && config.detector.gate_window.is_finite()) {
        out.push(Violation::new(
            "detector.gate_window",
            format!("nonpositive gate window ({})", config.detector.gate_window),
        ));
    }
    match config.carrier_phase {
        CarrierPhase::Suppressed { residual } if !residual.is_finite() => out.push(
            Violation::new("carrier_phase.residual", "non-finite phase".to_string()),
        ),
        CarrierPhase::Carrier { angular_frequency } if !angular_frequency.is_finite() => out
            .push(Violation::new(
                "carrier_phase.angular_frequency",
                "non-finite frequency".to_string(),
            )),
        _ => {}
    }
    if let OverlapSpec::Fixed { re, im } = config.overlap {
        let magnitude = re.hypot(im);
        if !(magnitude <= 1.0 + 1e-9) {
            out.push(Violation::new(
                "overlap",
                format!("mode overlap magnitude {magnitude} exceeds 1"),
            ));
        }
    }
    check_probability(
        &mut out,
        "source.herald_probability",
        config.source.herald_probability,
    );
    if !(config.source.total_counts >= 0.0 && config.source.total_counts.is_finite()) {
        out.push(Violation::new(
            "source.total_counts",
            format!("negative count scale ({})", config.source.total_counts),
        ));
    }
    config.timing.check(&mut out);

    if out.is_empty() {
        Ok(config)
    } else {
        Err(ValidationError { violations: out })
    }
}

/// Calibration of the optical-depth to efficiency map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdCalibration {
    pub eta_max: f64,
    pub od_sat: f64,
}

impl Default for OdCalibration {
    fn default() -> Self {
        Self {
            eta_max: 0.331,
            od_sat: 15.0,
        }
    }
}

/// Saturating map `eta_max * (1 - exp(-od / od_sat))`.
pub fn od_to_efficiency(od: f64, calib: &OdCalibration) -> Result<f64, ValidationError> {
    let mut out = Vec::new();
    if !(od >= 0.0) {
        out.push(Violation::new("od", format!("negative optical depth ({od})")));
    }
    check_probability(&mut out, "eta_max", calib.eta_max);
    if !(calib.od_sat > 0.0) {
        out.push(Violation::new(
            "od_sat",
            format!("nonpositive saturation depth ({})", calib.od_sat),
        ));
    }
    if !out.is_empty() {
        return Err(ValidationError { violations: out });
    }
    if od.is_infinite() {
        return Ok(calib.eta_max);
    }
    Ok(-calib.eta_max * (-od / calib.od_sat).exp_m1())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: String) -> Self {
        Self {
            field: field.into(),
            message,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: ")?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn check_probability(out: &mut Vec<Violation>, field: &str, value: f64) {
    if !(0.0..=1.0).contains(&value) {
        out.push(Violation::new(
            field,
            format!("probability out of range ({value})"),
        ));
    }
}

/// TOML has no literal for infinity in every writer, so accept either a
/// number or the strings "inf"/"infinity".
mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        if value.is_infinite() && *value > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*value)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
                other => Err(serde::de::Error::custom(format!(
                    "expected a duration or \"inf\", got \"{other}\""
                ))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_write_in_efficiency_is_valid() {
        let mut c = InterferometerConfig::default();
        c.mbs1.eta_con = 0.850;
        assert!(validate(c).is_ok());
    }

    #[test]
    fn out_of_range_probability_is_reported() {
        let mut c = InterferometerConfig::default();
        c.mbs1.eta_con = 1.2;
        let err = validate(c).unwrap_err();
        assert_eq!(err.violations.len(), 1);
        assert!(err.to_string().contains("probability out of range"));
        assert_eq!(err.violations[0].field, "mbs1.eta_con");
    }

    #[test]
    fn open_interferometer_is_valid() {
        assert!(validate(InterferometerConfig::default().with_xi(0.0)).is_ok());
    }

    #[test]
    fn every_violation_is_listed() {
        let mut c = InterferometerConfig::default();
        c.mbs2.eta_stored = -0.1;
        c.mbs1.coherence_time_t1 = 0.0;
        c.detector.gate_window = 0.0;
        c.timing.trap_duration = 9.5;
        let err = validate(c).unwrap_err();
        let fields: Vec<_> = err.violations.iter().map(|v| v.field.as_str()).collect();
        assert_eq!(
            fields,
            ["mbs1.coherence_time_t1", "mbs2.eta_stored", "detector.gate_window", "timing"]
        );
        assert!(err.to_string().contains("inconsistent timing sequence"));
    }

    #[test]
    fn nominal_timing_fits_the_period() {
        // 8.7 + 1.3 ms against a 10 ms period; floating point sums to just over 10.
        assert!(validate(InterferometerConfig::default()).is_ok());
        assert_eq!(TimingSequence::default().gates_per_cycle(500.0), 2600);
    }

    #[test]
    fn total_efficiency_cases() {
        let m = MemoryBeamSplitter::from_total(0.850, 0.133, 200.0);
        assert!((m.eta_stored - 0.156_470_588).abs() < 1e-8);
        assert!((total_efficiency(&m) - 0.133).abs() < 1e-15);

        let lossless = MemoryBeamSplitter {
            eta_con: 1.0,
            eta_stored: 1.0,
            ..m
        };
        assert_eq!(total_efficiency(&lossless), 1.0);

        let dead = MemoryBeamSplitter {
            eta_con: 0.5,
            eta_stored: 0.0,
            ..m
        };
        assert_eq!(total_efficiency(&dead), 0.0);
    }

    #[test]
    fn od_map_examples() {
        let calib = OdCalibration {
            eta_max: 0.331,
            od_sat: 15.0,
        };
        assert_eq!(od_to_efficiency(0.0, &calib).unwrap(), 0.0);
        let at40 = od_to_efficiency(40.0, &calib).unwrap();
        let expected = 0.331 * (1.0 - (-40.0f64 / 15.0).exp());
        assert!((at40 - expected).abs() < 1e-15);
        assert!((at40 - 0.308).abs() < 5e-4);
        assert_eq!(od_to_efficiency(f64::INFINITY, &calib).unwrap(), 0.331);
        assert!((od_to_efficiency(1e4, &calib).unwrap() - 0.331).abs() < 1e-15);
        assert!(od_to_efficiency(-1.0, &calib).is_err());
    }

    #[test]
    fn dark_probability_thins_poisson_rate() {
        let d = DetectorModel {
            efficiency: 0.6,
            dark_rate: 25.0,
            gate_window: 500.0,
        };
        assert!((d.dark_probability() - 1.25e-5).abs() < 1e-9);
    }
}
