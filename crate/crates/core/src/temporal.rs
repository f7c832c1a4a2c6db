//! Temporal envelopes of the retrieved photonic modes, their complex overlap,
//! and spin-wave decoherence.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::Interferometer;
use crate::model::{InterferometerConfig, Violation};
use crate::Result;

/// Relative tolerance of every overlap and normalization integral.
pub const QUADRATURE_REL_TOL: f64 = 1e-8;
const QUADRATURE_ABS_TOL: f64 = 1e-15;
const QUADRATURE_MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketShape {
    /// `exp(-(t - center)^2 / (2 width^2))`
    Gaussian,
    /// `exp(-(t - center) / (2 width))` for `t >= center`; `width` is the
    /// intensity time constant.
    ExponentialDecay,
    /// Flat top of full width `width` centred on `center`.
    Rectangular,
}

/// Normalized temporal field envelope, in ns^{-1/2}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavePacket {
    pub shape: PacketShape,
    #[serde(default)]
    pub center: f64,
    pub width: f64,
}

impl Default for WavePacket {
    fn default() -> Self {
        Self {
            shape: PacketShape::ExponentialDecay,
            center: 0.0,
            width: crate::model::DEFAULT_PACKET1_WIDTH,
        }
    }
}

impl WavePacket {
    pub fn gaussian(center: f64, sigma: f64) -> Self {
        Self {
            shape: PacketShape::Gaussian,
            center,
            width: sigma,
        }
    }

    pub fn exponential(center: f64, time_constant: f64) -> Self {
        Self {
            shape: PacketShape::ExponentialDecay,
            center,
            width: time_constant,
        }
    }

    pub fn rectangular(center: f64, full_width: f64) -> Self {
        Self {
            shape: PacketShape::Rectangular,
            center,
            width: full_width,
        }
    }

    pub(crate) fn check(&self, field: &str, out: &mut Vec<Violation>) {
        if !(self.width > 0.0 && self.width.is_finite()) || !self.center.is_finite() {
            out.push(Violation {
                field: field.to_string(),
                message: format!(
                    "packet width must be positive and finite (width {}, center {})",
                    self.width, self.center
                ),
            });
        }
    }

    pub fn envelope(&self, t: f64) -> Complex64 {
        envelope(self, t)
    }

    /// Interval outside which `|psi|^2` is below double precision relative
    /// to its peak.
    pub fn support(&self) -> (f64, f64) {
        let (c, w) = (self.center, self.width);
        match self.shape {
            PacketShape::Gaussian => (c - 10.0 * w, c + 10.0 * w),
            // intensity tail e^{-40} ~ 4e-18
            PacketShape::ExponentialDecay => (c, c + 40.0 * w),
            PacketShape::Rectangular => (c - 0.5 * w, c + 0.5 * w),
        }
    }

    /// Points where the envelope is not smooth.
    fn kinks(&self) -> Vec<f64> {
        match self.shape {
            PacketShape::Gaussian => vec![self.center],
            PacketShape::ExponentialDecay => vec![self.center],
            PacketShape::Rectangular => {
                let (a, b) = self.support();
                vec![a, b]
            }
        }
    }

    /// Draws an arrival time from `|psi(t)|^2`.
    pub fn sample_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (c, w) = (self.center, self.width);
        match self.shape {
            PacketShape::Gaussian => {
                // |psi|^2 is a normal density with standard deviation w / sqrt(2)
                let u1: f64 = 1.0 - rng.random::<f64>();
                let u2: f64 = rng.random();
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
                c + z * w / 2f64.sqrt()
            }
            PacketShape::ExponentialDecay => {
                let u: f64 = rng.random();
                c - w * (-u).ln_1p()
            }
            PacketShape::Rectangular => c + w * (rng.random::<f64>() - 0.5),
        }
    }
}

/// Normalized envelope value at `t`.
pub fn envelope(p: &WavePacket, t: f64) -> Complex64 {
    let x = t - p.center;
    let w = p.width;
    let value = match p.shape {
        PacketShape::Gaussian => (PI * w * w).powf(-0.25) * (-x * x / (2.0 * w * w)).exp(),
        PacketShape::ExponentialDecay => {
            if x >= 0.0 {
                (-x / (2.0 * w)).exp() / w.sqrt()
            } else {
                0.0
            }
        }
        PacketShape::Rectangular => {
            if x.abs() <= 0.5 * w {
                1.0 / w.sqrt()
            } else {
                0.0
            }
        }
    };
    Complex64::new(value, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapResult {
    pub zeta: Complex64,
    pub magnitude: f64,
}

impl OverlapResult {
    fn new(zeta: Complex64) -> Self {
        Self {
            zeta,
            magnitude: zeta.norm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error(
    "quadrature did not converge: estimate {estimate}, error {error_estimate:e} after {intervals} subintervals"
)]
pub struct QuadratureError {
    pub estimate: f64,
    pub error_estimate: f64,
    pub intervals: usize,
}

/// `zeta = integral of conj(psi1(t)) * psi2(t - delta_t) dt`.
pub fn overlap(p1: &WavePacket, p2: &WavePacket, delta_t: f64) -> Result<OverlapResult> {
    let mut problems = Vec::new();
    p1.check("p1", &mut problems);
    p2.check("p2", &mut problems);
    if !delta_t.is_finite() {
        return Err(crate::Error::InvalidInput(format!(
            "non-finite packet offset {delta_t}"
        )));
    }
    if !problems.is_empty() {
        return Err(crate::model::ValidationError {
            violations: problems,
        }
        .into());
    }
    // Exact by normalization.
    if p1 == p2 && delta_t == 0.0 {
        return Ok(OverlapResult::new(Complex64::new(1.0, 0.0)));
    }

    let (a1, b1) = p1.support();
    let (a2, b2) = p2.support();
    let lo = a1.max(a2 + delta_t);
    let hi = b1.min(b2 + delta_t);
    if lo >= hi {
        return Ok(OverlapResult::new(Complex64::new(0.0, 0.0)));
    }
    let mut breaks = vec![lo, hi];
    breaks.extend(p1.kinks());
    breaks.extend(p2.kinks().into_iter().map(|k| k + delta_t));
    let zeta = integrate(
        |t| envelope(p1, t).conj() * envelope(p2, t - delta_t),
        &breaks,
        lo,
        hi,
    )?;
    Ok(OverlapResult::new(zeta))
}

/// `integral |psi|^2 dt` over the packet support; 1 up to quadrature error.
pub fn norm_squared(p: &WavePacket) -> Result<f64> {
    let (lo, hi) = p.support();
    let v = integrate(|t| Complex64::new(envelope(p, t).norm_sqr(), 0.0), &p.kinks(), lo, hi)?;
    Ok(v.re)
}

/// Fraction of retrieved intensity surviving `storage_time` of spin-wave
/// decoherence. `t1 = inf` means no decoherence.
pub fn decoherence_factor(storage_time: f64, t1: f64) -> f64 {
    if t1.is_infinite() {
        1.0
    } else {
        (-storage_time / t1).exp()
    }
}

/// Visibility as the second memory's storage time is scanned with the first
/// memory's fixed, the packet overlap recomputed at each offset.
pub fn storage_time_visibility_profile(
    config: &InterferometerConfig,
    storage_time_2_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    storage_time_2_grid
        .iter()
        .map(|&t| {
            let mut c = *config;
            c.mbs2.storage_time = t;
            let engine = Interferometer::new(c)?;
            Ok((t, engine.visibility()))
        })
        .collect()
}

// --- adaptive Gauss-Kronrod (7/15) ---

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += pair * WGK[i];
        if i % 2 == 1 {
            gauss += pair * WG[i / 2];
        }
    }
    let value = kronrod * h;
    let error = ((kronrod - gauss) * h).norm();
    Panel { a, b, value, error }
}

/// Globally adaptive integral of `f` over `[lo, hi]`, pre-split at any of
/// `breaks` that fall strictly inside.
pub(crate) fn integrate<F: Fn(f64) -> Complex64>(
    f: F,
    breaks: &[f64],
    lo: f64,
    hi: f64,
) -> std::result::Result<Complex64, QuadratureError> {
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&x| x > lo && x < hi)
        .collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut panels: Vec<Panel> = cuts.windows(2).map(|w| gk15(&f, w[0], w[1])).collect();
    loop {
        let total: Complex64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        if error <= (QUADRATURE_REL_TOL * total.norm()).max(QUADRATURE_ABS_TOL) {
            return Ok(total);
        }
        if panels.len() >= QUADRATURE_MAX_INTERVALS {
            return Err(QuadratureError {
                estimate: total.norm(),
                error_estimate: error,
                intervals: panels.len(),
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("at least one panel");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            return Err(QuadratureError {
                estimate: total.norm(),
                error_estimate: error,
                intervals: panels.len() + 1,
            });
        }
        panels.push(gk15(&f, p.a, mid));
        panels.push(gk15(&f, mid, p.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_shapes() -> [WavePacket; 3] {
        [
            WavePacket::gaussian(3.0, 50.0),
            WavePacket::exponential(-7.0, 12.0),
            WavePacket::rectangular(1.0, 80.0),
        ]
    }

    #[test]
    fn gaussian_peak_value() {
        let p = WavePacket::gaussian(10.0, 50.0);
        let peak = envelope(&p, 10.0).re;
        assert!((peak - (PI * 2500.0).powf(-0.25)).abs() < 1e-15);
    }

    #[test]
    fn exponential_is_causal() {
        let p = WavePacket::exponential(5.0, 12.0);
        assert_eq!(envelope(&p, 4.999).norm(), 0.0);
        assert!(envelope(&p, 5.0).norm() > 0.0);
    }

    #[test]
    fn envelopes_are_normalized() {
        for p in all_shapes() {
            let n = norm_squared(&p).unwrap();
            assert!((n - 1.0).abs() < 1e-9, "{p:?}: {n}");
        }
    }

    #[test]
    fn self_overlap_is_one() {
        for p in all_shapes() {
            assert_eq!(overlap(&p, &p, 0.0).unwrap().magnitude, 1.0);
            // also through the quadrature path
            let r = overlap(&p, &p, 1e-300).unwrap();
            assert!((r.magnitude - 1.0).abs() < 1e-8, "{p:?}: {}", r.magnitude);
        }
    }

    #[test]
    fn gaussian_overlap_closed_form() {
        let p = WavePacket::gaussian(0.0, 50.0);
        let r = overlap(&p, &p, 100.0).unwrap();
        assert!((r.magnitude - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn disjoint_rectangles_do_not_overlap() {
        let p = WavePacket::rectangular(0.0, 50.0);
        let q = WavePacket::rectangular(0.0, 30.0);
        assert_eq!(overlap(&p, &q, 100.0).unwrap().magnitude, 0.0);
    }

    #[test]
    fn decoherence_examples() {
        assert_eq!(decoherence_factor(0.0, 420.0), 1.0);
        assert!((decoherence_factor(420.0, 420.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(decoherence_factor(1e6, f64::INFINITY), 1.0);
        let counts = 503.0 * decoherence_factor(420.0, 420.0) + 58.0;
        assert!((counts - 243.04).abs() < 0.01);
    }

    #[test]
    fn bad_packet_is_rejected() {
        let p = WavePacket::gaussian(0.0, 0.0);
        assert!(overlap(&p, &WavePacket::default(), 0.0).is_err());
    }
}
