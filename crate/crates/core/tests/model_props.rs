mod common;

use mbs_interferometer::model::{
    od_to_efficiency, total_efficiency, validate, MemoryBeamSplitter, OdCalibration,
};
use mbs_interferometer::InterferometerConfig;
use proptest::prelude::*;

fn any_config() -> impl Strategy<Value = InterferometerConfig> {
    (common::config(), -0.5..1.5f64, -0.5..1.5f64, -100.0..100.0f64).prop_map(|(mut c, a, b, d)| {
        c.mbs1.eta_con = a;
        c.qrng.xi = b;
        c.detector.dark_rate = d;
        c
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn validation_is_idempotent(c in any_config()) {
        let once = validate(c);
        match &once {
            Ok(v) => {
                prop_assert_eq!(v, &c);
                prop_assert_eq!(validate(*v).unwrap(), *v);
            }
            Err(e) => {
                let bad_inputs = [
                    !(0.0..=1.0).contains(&c.mbs1.eta_con),
                    !(0.0..=1.0).contains(&c.qrng.xi),
                    c.detector.dark_rate < 0.0,
                ];
                prop_assert_eq!(e.violations.len(), bad_inputs.iter().filter(|b| **b).count());
                prop_assert_eq!(validate(c).unwrap_err(), e.clone());
            }
        }
    }

    #[test]
    fn total_efficiency_monotone(con in 0.0..=1.0f64, stored in 0.0..=1.0f64, dc in 0.0..0.5f64, ds in 0.0..0.5f64) {
        let m = |a: f64, b: f64| MemoryBeamSplitter { eta_con: a, eta_stored: b, ..MemoryBeamSplitter::from_total(0.0, 0.0, 0.0) };
        let base = total_efficiency(&m(con, stored));
        prop_assert!(base <= con && base <= stored);
        prop_assert!(total_efficiency(&m((con + dc).min(1.0), stored)) >= base);
        prop_assert!(total_efficiency(&m(con, (stored + ds).min(1.0))) >= base);
    }

    #[test]
    fn od_map_monotone(seed_grid in proptest::collection::vec(0.0..=100.0f64, 1000)) {
        let mut grid = seed_grid;
        grid.sort_by(f64::total_cmp);
        let cal = OdCalibration::default();
        let etas: Vec<f64> = grid.iter().map(|&od| od_to_efficiency(od, &cal).unwrap()).collect();
        prop_assert!(etas.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(etas.iter().all(|&e| (0.0..=cal.eta_max).contains(&e)));
    }
}
