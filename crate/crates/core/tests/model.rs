use std::f64::consts::PI;
use std::sync::Arc;

use kslab::grid::RadialGrid;
use kslab::model::{
    chandrasekhar_mass, radial_concentration, sphere_measure, truncated_initial_density,
    truncated_initial_mass, MassField, ModelParams, Regime, TruncationSpec,
};
use kslab::specfun::quad::gauss_kronrod;
use kslab::specfun::QuadratureSpec;
use proptest::prelude::*;

#[test]
fn sphere_measure_recurrence() {
    for d in 3..=50u32 {
        let lhs = sphere_measure(d + 2).unwrap();
        let rhs = 2.0 * PI / d as f64 * sphere_measure(d).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * rhs, "d={d}");
    }
}

#[test]
fn regimes() {
    assert_eq!(
        ModelParams::new(3, 0.5).unwrap().regime(),
        Regime::Subcritical
    );
    assert_eq!(ModelParams::new(3, 1.0).unwrap().regime(), Regime::Critical);
    assert_eq!(
        ModelParams::experimental(3, 1.5).unwrap().regime(),
        Regime::Supercritical
    );
    assert!(ModelParams::new(3, 1.5).is_err());
    assert!(ModelParams::new(2, 0.5).is_err());
    assert!(ModelParams::new(3, 0.0).is_err());
}

#[test]
fn truncated_mass_integrates_its_density() {
    for (d, eps, k) in [(3, 0.5, 1.0), (4, 0.9, 2.0), (7, 0.2, 0.5)] {
        let p = ModelParams::new(d, eps).unwrap();
        let t = TruncationSpec::new(&p, k).unwrap();
        let q = QuadratureSpec::adaptive(1e-13);
        for r in [0.5 * t.r_k(), t.r_k(), 2.0 * t.r_k(), 10.0] {
            let f =
                |s: f64| p.sigma_d() * s.powi(d as i32 - 1) * truncated_initial_density(&p, &t, s);
            let mut v = gauss_kronrod(f, 0.0, r.min(t.r_k()), &q).unwrap().value;
            if r > t.r_k() {
                v += gauss_kronrod(f, t.r_k(), r, &q).unwrap().value;
            }
            let m = truncated_initial_mass(&p, &t, r);
            assert!((v - m).abs() <= 1e-11 * m, "d={d} r={r}: {v} vs {m}");
        }
    }
}

proptest! {
    #[test]
    fn truncated_mass_is_monotone(d in 3u32..12, eps in 0.01f64..1.0, k in 0.1f64..10.0, r in 0.0f64..20.0, dr in 0.0f64..5.0, dk in 0.0f64..5.0) {
        let p = ModelParams::new(d, eps).unwrap();
        let t = TruncationSpec::new(&p, k).unwrap();
        let t2 = TruncationSpec::new(&p, k + dk).unwrap();
        let m = truncated_initial_mass(&p, &t, r);
        prop_assert!(truncated_initial_mass(&p, &t, r + dr) >= m);
        prop_assert!(truncated_initial_mass(&p, &t2, r) >= m * (1.0 - 1e-14));
        prop_assert!(m <= eps * chandrasekhar_mass(&p, r) * (1.0 + 1e-14));
    }

    #[test]
    fn truncated_field_concentration_is_below_the_datum(d in 3u32..8, eps in 0.05f64..1.0, k in 0.2f64..5.0) {
        let p = ModelParams::new(d, eps).unwrap();
        let t = TruncationSpec::new(&p, k).unwrap();
        let g = Arc::new(RadialGrid::uniform(10.0, 200).unwrap());
        let f = MassField::truncated(p, &t, g);
        prop_assert!(radial_concentration(&f) <= 2.0 * eps * p.sigma_d() * (1.0 + 1e-12));
        prop_assert!(f.satisfies_invariants(1e-12));
    }
}
