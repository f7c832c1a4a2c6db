//! Least-squares fits of the two model families that come out of the
//! experiment (fringe sinusoid, exponential decay over a background) and
//! visibility extraction from fringe data.
//!
//! Both fits run the same small Levenberg-Marquardt loop with analytic
//! Jacobians and Marquardt (diagonal) damping, which keeps the iterates
//! equivariant under rescaling of the counts.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::FringeScan;
use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const RELATIVE_STEP_TOL: f64 = 1e-10;
const POLISH_TOL: f64 = 1e-6;
const LAMBDA_INIT: f64 = 1e-3;
/// Damping beyond which no descent direction is left at working precision.
const LAMBDA_STALL: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("fit did not converge after {0} iterations")]
    NotConverged(usize),
    #[error("decay unidentifiable: {0}")]
    DecayUnidentifiable(String),
    #[error("all-zero scan has no visibility")]
    AllZero,
    #[error("non-finite or negative data")]
    BadData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Residuals weighted by `1 / max(counts, 1)`.
    Poisson,
}

impl Weighting {
    fn weight(&self, y: f64) -> f64 {
        match self {
            Weighting::Unweighted => 1.0,
            Weighting::Poisson => 1.0 / y.max(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidUncertainties {
    pub amplitude: f64,
    pub phase0: f64,
    pub offset: f64,
}

/// `offset + amplitude * cos(phi - phase0)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFit {
    pub amplitude: f64,
    /// In `(-pi, pi]`.
    pub phase0: f64,
    pub offset: f64,
    pub residual_norm: f64,
    pub parameter_uncertainties: SinusoidUncertainties,
    /// Set when the fitted curve dips below zero (`offset < amplitude`).
    pub negative_minimum: bool,
    pub iterations: usize,
}

impl SinusoidFit {
    pub fn eval(&self, phi: f64) -> f64 {
        self.offset + self.amplitude * (phi - self.phase0).cos()
    }

    pub fn maximum(&self) -> f64 {
        self.offset + self.amplitude
    }

    pub fn minimum(&self) -> f64 {
        self.offset - self.amplitude
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayUncertainties {
    pub a: f64,
    pub t: f64,
    pub g0: f64,
}

/// `a * exp(-t / time_constant) + g0`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub a: f64,
    pub t: f64,
    pub g0: f64,
    pub residual_norm: f64,
    pub parameter_uncertainties: DecayUncertainties,
    /// The unconstrained optimum had a negative background, so the fit was
    /// repeated with `g0` pinned at zero.
    pub background_pinned: bool,
    pub iterations: usize,
}

impl DecayFit {
    pub fn eval(&self, time: f64) -> f64 {
        self.a * (-time / self.t).exp() + self.g0
    }
}

struct Solution<const P: usize> {
    params: [f64; P],
    covariance: [[f64; P]; P],
    rss: f64,
    iterations: usize,
}

/// Minimizes `sum w_i r_i(p)^2` by Levenberg-Marquardt. `eval` fills the
/// residuals (`model - data`) and the Jacobian rows.
fn levenberg_marquardt<const P: usize>(
    n: usize,
    weights: &[f64],
    init: [f64; P],
    eval: impl Fn(&[f64; P], &mut [f64], &mut [[f64; P]]),
) -> std::result::Result<Solution<P>, FitError> {
    let mut r = vec![0.0; n];
    let mut jac = vec![[0.0; P]; n];
    let cost_of = |r: &[f64]| -> f64 { r.iter().zip(weights).map(|(r, w)| w * r * r).sum() };

    let mut p = init;
    eval(&p, &mut r, &mut jac);
    let mut cost = cost_of(&r);
    if !cost.is_finite() {
        return Err(FitError::BadData);
    }
    let mut lambda = LAMBDA_INIT;
    let mut trial_r = vec![0.0; n];
    let mut trial_jac = vec![[0.0; P]; n];
    let mut iterations = 0;
    let mut converged = false;
    let mut last_polish = f64::INFINITY;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (normal, grad) = normal_equations(&jac, &r, weights);
        if grad.iter().all(|g| *g == 0.0) {
            converged = true;
            break;
        }
        // Close to the optimum the cost is flat to rounding, so small
        // undamped steps are taken on the gradient alone.
        if let Some(gn) = solve(normal, grad.map(|g| -g)) {
            let size = relative_size(&gn, &p, &init);
            if size < POLISH_TOL {
                let candidate: [f64; P] = std::array::from_fn(|i| p[i] + gn[i]);
                eval(&candidate, &mut trial_r, &mut trial_jac);
                let c = cost_of(&trial_r);
                if c.is_finite() && c <= cost * (1.0 + 1e-12) {
                    p = candidate;
                    cost = c;
                    std::mem::swap(&mut r, &mut trial_r);
                    std::mem::swap(&mut jac, &mut trial_jac);
                    // steps stopped shrinking: rounding floor
                    if size < RELATIVE_STEP_TOL || size >= last_polish {
                        converged = true;
                        break;
                    }
                    last_polish = size;
                    continue;
                }
            }
        }
        let mut step = None;
        while lambda < LAMBDA_STALL {
            let mut damped = normal;
            for i in 0..P {
                damped[i][i] += lambda * normal[i][i].max(f64::MIN_POSITIVE);
            }
            let rhs = grad.map(|g| -g);
            if let Some(delta) = solve(damped, rhs) {
                let candidate: [f64; P] = std::array::from_fn(|i| p[i] + delta[i]);
                eval(&candidate, &mut trial_r, &mut trial_jac);
                let c = cost_of(&trial_r);
                if c.is_finite() && c < cost {
                    step = Some((candidate, c));
                    break;
                }
            }
            lambda *= 10.0;
        }
        let Some((candidate, c)) = step else {
            // no descent left: stationary at working precision
            converged = true;
            break;
        };
        p = candidate;
        cost = c;
        std::mem::swap(&mut r, &mut trial_r);
        std::mem::swap(&mut jac, &mut trial_jac);
        lambda = (lambda / 10.0).max(1e-12);
    }
    if !converged {
        return Err(FitError::NotConverged(iterations));
    }

    let (normal, _) = normal_equations(&jac, &r, weights);
    let dof = n.saturating_sub(P);
    let s2 = if dof > 0 { cost / dof as f64 } else { f64::NAN };
    let covariance = invert(normal)
        .map(|inv| inv.map(|row| row.map(|v| v * s2)))
        .unwrap_or([[f64::INFINITY; P]; P]);
    Ok(Solution {
        params: p,
        covariance,
        rss: cost,
        iterations,
    })
}

/// Largest per-parameter step relative to the parameter, with a floor tied
/// to the starting point so parameters near zero still converge.
fn relative_size<const P: usize>(delta: &[f64; P], p: &[f64; P], init: &[f64; P]) -> f64 {
    (0..P)
        .map(|i| {
            let scale = p[i].abs().max(1e-6 * init[i].abs()).max(f64::MIN_POSITIVE);
            delta[i].abs() / scale
        })
        .fold(0.0, f64::max)
}

fn normal_equations<const P: usize>(
    jac: &[[f64; P]],
    r: &[f64],
    weights: &[f64],
) -> ([[f64; P]; P], [f64; P]) {
    let mut a = [[0.0; P]; P];
    let mut g = [0.0; P];
    for ((row, ri), w) in jac.iter().zip(r).zip(weights) {
        for i in 0..P {
            g[i] += w * row[i] * ri;
            for j in 0..P {
                a[i][j] += w * row[i] * row[j];
            }
        }
    }
    (a, g)
}

/// Gaussian elimination with partial pivoting.
fn solve<const P: usize>(mut a: [[f64; P]; P], mut b: [f64; P]) -> Option<[f64; P]> {
    for col in 0..P {
        let pivot = (col..P).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col] == 0.0 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..P {
            let f = a[row][col] / a[col][col];
            for k in col..P {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; P];
    for i in (0..P).rev() {
        let s: f64 = (i + 1..P).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn invert<const P: usize>(a: [[f64; P]; P]) -> Option<[[f64; P]; P]> {
    let mut inv = [[0.0; P]; P];
    for k in 0..P {
        let mut e = [0.0; P];
        e[k] = 1.0;
        let col = solve(a, e)?;
        for i in 0..P {
            inv[i][k] = col[i];
        }
    }
    Some(inv)
}

fn check_data(values: &[f64]) -> std::result::Result<(), FitError> {
    if values.iter().all(|v| v.is_finite() && *v >= 0.0) {
        Ok(())
    } else {
        Err(FitError::BadData)
    }
}

fn count_distinct(sorted: &mut Vec<f64>) -> usize {
    sorted.sort_by(f64::total_cmp);
    sorted.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
    sorted.len()
}

pub fn fit_sinusoid(scan: &FringeScan) -> Result<SinusoidFit> {
    fit_sinusoid_weighted(scan, Weighting::Unweighted)
}

/// Fits `offset + amplitude * cos(phi - phase0)`.
///
/// Internally the model is linear in `(offset, c, s)` with
/// `c = amplitude cos(phase0)`, `s = amplitude sin(phase0)`; the iteration
/// starts from the discrete Fourier component at period `2 pi`.
pub fn fit_sinusoid_weighted(scan: &FringeScan, weighting: Weighting) -> Result<SinusoidFit> {
    let (phases, values) = (&scan.phases, &scan.values);
    if phases.len() != values.len() {
        return Err(Error::InvalidInput("phase/value length mismatch".into()));
    }
    check_data(values)?;
    let mut distinct = phases.clone();
    let n_distinct = count_distinct(&mut distinct);
    if n_distinct <= 1 {
        return Err(FitError::DegenerateGrid("all phases equal".into()).into());
    }
    if n_distinct < 4 {
        return Err(FitError::TooFewPoints {
            needed: 4,
            got: n_distinct,
        }
        .into());
    }
    let span = distinct[distinct.len() - 1] - distinct[0];
    if span < PI * (1.0 - 1e-12) {
        return Err(FitError::DegenerateGrid(format!(
            "phases span {span:.4} rad, less than half a period"
        ))
        .into());
    }

    let n = phases.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let c0 = 2.0 / n * phases.iter().zip(values).map(|(p, y)| y * p.cos()).sum::<f64>();
    let s0 = 2.0 / n * phases.iter().zip(values).map(|(p, y)| y * p.sin()).sum::<f64>();
    let weights: Vec<f64> = values.iter().map(|&y| weighting.weight(y)).collect();

    let sol = levenberg_marquardt(phases.len(), &weights, [mean, c0, s0], |p, r, jac| {
        for (i, &phi) in phases.iter().enumerate() {
            let (sin, cos) = phi.sin_cos();
            r[i] = p[0] + p[1] * cos + p[2] * sin - values[i];
            jac[i] = [1.0, cos, sin];
        }
    })?;

    let [offset, c, s] = sol.params;
    let amplitude = c.hypot(s);
    let phase0 = if amplitude > 0.0 { s.atan2(c) } else { 0.0 };
    let cov = sol.covariance;
    let (sigma_amplitude, sigma_phase) = if amplitude > 0.0 {
        let (gc, gs) = (c / amplitude, s / amplitude);
        let var_a = gc * gc * cov[1][1] + 2.0 * gc * gs * cov[1][2] + gs * gs * cov[2][2];
        let (hc, hs) = (-s / (amplitude * amplitude), c / (amplitude * amplitude));
        let var_p = hc * hc * cov[1][1] + 2.0 * hc * hs * cov[1][2] + hs * hs * cov[2][2];
        (var_a.max(0.0).sqrt(), var_p.max(0.0).sqrt())
    } else {
        (cov[1][1].max(cov[2][2]).max(0.0).sqrt(), f64::INFINITY)
    };
    Ok(SinusoidFit {
        amplitude,
        phase0,
        offset,
        residual_norm: sol.rss.sqrt(),
        parameter_uncertainties: SinusoidUncertainties {
            amplitude: sigma_amplitude,
            phase0: sigma_phase,
            offset: cov[0][0].max(0.0).sqrt(),
        },
        negative_minimum: offset < amplitude,
        iterations: sol.iterations,
    })
}

pub fn fit_exponential_decay(points: &[(f64, f64)]) -> Result<DecayFit> {
    fit_exponential_decay_weighted(points, Weighting::Unweighted)
}

/// Fits `a * exp(-t / T) + g0`. Starts from a log-linear regression of
/// `counts - min(counts)`; if the optimum has a negative background the fit
/// is redone with `g0 = 0`.
pub fn fit_exponential_decay_weighted(
    points: &[(f64, f64)],
    weighting: Weighting,
) -> Result<DecayFit> {
    let times: Vec<f64> = points.iter().map(|p| p.0).collect();
    let counts: Vec<f64> = points.iter().map(|p| p.1).collect();
    check_data(&counts)?;
    if times.iter().any(|t| !t.is_finite()) {
        return Err(FitError::BadData.into());
    }
    let mut distinct = times.clone();
    let n_distinct = count_distinct(&mut distinct);
    if n_distinct < 4 {
        return Err(FitError::TooFewPoints {
            needed: 4,
            got: n_distinct,
        }
        .into());
    }
    let lo = counts.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = counts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 * hi.abs() {
        return Err(FitError::DecayUnidentifiable("all counts equal".into()).into());
    }

    // log-linear start on counts above the floor
    let lifted: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| *y - lo > 0.0)
        .map(|&(t, y)| (t, (y - lo).ln()))
        .collect();
    let (slope, intercept) = linear_regression(&lifted)
        .ok_or_else(|| FitError::DecayUnidentifiable("too few points above background".into()))?;
    if !(slope < 0.0) {
        return Err(FitError::DecayUnidentifiable(format!(
            "counts do not decay (log slope {slope:e})"
        ))
        .into());
    }
    let weights: Vec<f64> = counts.iter().map(|&y| weighting.weight(y)).collect();
    let init = [intercept.exp(), -slope, lo];

    let full = levenberg_marquardt(points.len(), &weights, init, |p, r, jac| {
        for (i, &t) in times.iter().enumerate() {
            let e = (-p[1] * t).exp();
            r[i] = p[0] * e + p[2] - counts[i];
            jac[i] = [e, -p[0] * t * e, 1.0];
        }
    })?;

    let (a, k, g0, cov, rss, iterations, pinned) = if full.params[2] >= 0.0 {
        let [a, k, g0] = full.params;
        (a, k, g0, full.covariance, full.rss, full.iterations, false)
    } else {
        let pinned = levenberg_marquardt(points.len(), &weights, [init[0], init[1]], |p, r, jac| {
            for (i, &t) in times.iter().enumerate() {
                let e = (-p[1] * t).exp();
                r[i] = p[0] * e - counts[i];
                jac[i] = [e, -p[0] * t * e];
            }
        })?;
        let [a, k] = pinned.params;
        let c = pinned.covariance;
        let cov = [[c[0][0], c[0][1], 0.0], [c[1][0], c[1][1], 0.0], [0.0, 0.0, 0.0]];
        (a, k, 0.0, cov, pinned.rss, full.iterations + pinned.iterations, true)
    };
    if !(k > 0.0 && a > 0.0) {
        return Err(FitError::DecayUnidentifiable(format!(
            "fitted amplitude {a:e}, rate {k:e}"
        ))
        .into());
    }
    Ok(DecayFit {
        a,
        t: 1.0 / k,
        g0,
        residual_norm: rss.sqrt(),
        parameter_uncertainties: DecayUncertainties {
            a: cov[0][0].max(0.0).sqrt(),
            t: cov[1][1].max(0.0).sqrt() / (k * k),
            g0: cov[2][2].max(0.0).sqrt(),
        },
        background_pinned: pinned,
        iterations,
    })
}

fn linear_regression(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityEstimate {
    pub value: f64,
    /// The raw `amplitude / offset` fell outside `[0, 1]`.
    pub clamped: bool,
    pub fit: SinusoidFit,
}

/// `(max - min) / (max + min)` of the fitted sinusoid, clamped to `[0, 1]`.
pub fn visibility_from_fringe(scan: &FringeScan) -> Result<VisibilityEstimate> {
    if scan.values.iter().all(|v| *v == 0.0) {
        return Err(FitError::AllZero.into());
    }
    let fit = fit_sinusoid(scan)?;
    let raw = fit.amplitude / fit.offset;
    let value = if raw.is_finite() { raw.clamp(0.0, 1.0) } else { 1.0 };
    Ok(VisibilityEstimate {
        value,
        clamped: value != raw,
        fit,
    })
}

/// Reads two numeric columns (`phase_rad` or `time_ns`, then `counts`) from
/// comma-separated text. A header row and `#` comment lines are skipped.
pub fn read_series<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::InvalidInput(format!("malformed table: {e}")))?;
        if rec.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "row {} has {} columns, expected 2",
                line + 1,
                rec.len()
            )));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => out.push((x, y)),
            _ if line == 0 => continue,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "row {} is not numeric: {:?}",
                    line + 1,
                    rec
                )))
            }
        }
    }
    Ok(out)
}

pub fn read_series_file(path: &Path) -> Result<Vec<(f64, f64)>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_series(f)
}

/// Writes a header row then one row per point.
pub fn write_series<W: Write>(
    writer: W,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format_value(*v)))?;
    }
    w.flush()
}

/// Shortest round-tripping decimal form.
pub fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
