use std::time::Instant;

use kslab::blowup::{
    cauchy_inequality_sides, compute_threshold, compute_threshold_with_cutoff,
    mean_inequality_sides, tail_cutoff,
};
use kslab::specfun::QuadratureSpec;

fn quad() -> QuadratureSpec {
    QuadratureSpec::adaptive(1e-12)
}

#[test]
fn bound_chain_holds_for_every_dimension() {
    let start = Instant::now();
    for d in 3..=200 {
        let r = compute_threshold(d, &quad()).unwrap();
        assert!(r.error_estimate <= 1e-10, "d={d}: {r:?}");
        assert!(r.chain_holds(), "d={d}: {r:?}");
        assert!(r.c_value > 1.0 && r.c_value < 2.0);
        if d <= 20 {
            assert!(r.chain_margin() >= 1e-6, "d={d}: {r:?}");
        }
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn high_dimension_certificate() {
    let r = compute_threshold(100, &quad()).unwrap();
    assert!(r.upper_bound_1 < 1.013);
    assert!(r.c_value < r.upper_bound_1);
}

#[test]
fn cutoff_is_converged() {
    for d in [3, 10, 50] {
        let a = compute_threshold(d, &quad()).unwrap().c_value;
        let b = compute_threshold_with_cutoff(d, 2.0 * tail_cutoff(d), &quad())
            .unwrap()
            .c_value;
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn proof_inequalities_hold() {
    for d in [3, 4, 7, 12, 30] {
        let (lhs, rhs) = mean_inequality_sides(d, &quad()).unwrap();
        assert!(lhs <= rhs, "d={d}");
        let (lhs, rhs) = cauchy_inequality_sides(d, &quad()).unwrap();
        assert!(lhs <= rhs, "d={d}");
    }
}

#[test]
fn tanh_sinh_agrees_with_adaptive() {
    for d in [3, 8] {
        let a = compute_threshold(d, &quad()).unwrap().c_value;
        let b = compute_threshold(d, &QuadratureSpec::tanh_sinh(1e-12))
            .unwrap()
            .c_value;
        assert!((a - b).abs() <= 1e-10);
    }
}
