#![allow(dead_code)]

use mbs_interferometer::model::{
    CarrierPhase, InterferometerConfig, MemoryBeamSplitter, OverlapSpec, QrngMode,
};
use mbs_interferometer::temporal::WavePacket;
use num_complex::Complex64;
use proptest::prelude::*;

pub fn unit() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0f64]
}

pub fn mode() -> impl Strategy<Value = QrngMode> {
    prop_oneof![Just(QrngMode::Amplitude), Just(QrngMode::Ensemble)]
}

fn t1() -> impl Strategy<Value = f64> {
    prop_oneof![Just(f64::INFINITY), 50.0..5000.0f64]
}

fn memory() -> impl Strategy<Value = MemoryBeamSplitter> {
    (unit(), unit(), 0.0..1000.0f64, t1()).prop_map(|(con, stored, s, t1)| MemoryBeamSplitter {
        eta_con: con,
        eta_stored: stored,
        storage_time: s,
        coherence_time_t1: t1,
        retrieved_packet: WavePacket::default(),
    })
}

/// Valid configs with a fixed overlap of magnitude at most one.
pub fn config() -> impl Strategy<Value = InterferometerConfig> {
    (
        memory(),
        memory(),
        unit(),
        mode(),
        0.0..=1.0f64,
        -std::f64::consts::PI..std::f64::consts::PI,
        -10.0..10.0f64,
        -std::f64::consts::PI..std::f64::consts::PI,
    )
        .prop_map(|(m1, m2, xi, mode, zmag, zarg, phi, residual)| {
            let mut c = InterferometerConfig::default()
                .with_xi(xi)
                .with_mode(mode)
                .with_eom_phase(phi)
                .with_overlap(OverlapSpec::fixed(Complex64::from_polar(zmag, zarg)));
            c.mbs1 = m1;
            c.mbs2 = m2;
            c.carrier_phase = CarrierPhase::Suppressed { residual };
            c
        })
}

pub fn packet() -> impl Strategy<Value = WavePacket> {
    (0usize..3, -50.0..50.0f64, 0.5..40.0f64).prop_map(|(k, c, w)| match k {
        0 => WavePacket::gaussian(c, w),
        1 => WavePacket::exponential(c, w),
        _ => WavePacket::rectangular(c, w),
    })
}

/// `(max - min) / (max + min)` of `p` over `[0, 2pi)`: dense grid scan
/// followed by golden-section refinement around the grid extrema.
pub fn brute_force_visibility(p: impl Fn(f64) -> f64, points: usize) -> f64 {
    let step = std::f64::consts::TAU / points as f64;
    let samples: Vec<f64> = (0..points).map(|k| p(k as f64 * step)).collect();
    let argmax = (0..points).max_by(|&a, &b| samples[a].total_cmp(&samples[b])).unwrap();
    let argmin = (0..points).min_by(|&a, &b| samples[a].total_cmp(&samples[b])).unwrap();
    let refine = |center: usize, sign: f64| {
        let (mut a, mut b) = ((center as f64 - 1.0) * step, (center as f64 + 1.0) * step);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..100 {
            let x1 = b - g * (b - a);
            let x2 = a + g * (b - a);
            if sign * p(x1) > sign * p(x2) {
                b = x2;
            } else {
                a = x1;
            }
        }
        p(0.5 * (a + b))
    };
    let max = refine(argmax, 1.0).max(samples[argmax]);
    let min = refine(argmin, -1.0).min(samples[argmin]);
    if max + min > 0.0 {
        (max - min) / (max + min)
    } else {
        0.0
    }
}
