use std::sync::{Arc, OnceLock};

use kslab::barrier::{barrier_value, BarrierSpec};
use kslab::mass_pde::{solve, solve_from, GridSpec, SolverConfig, TimeScheme};
use kslab::model::{MassField, ModelParams, TruncationSpec};
use kslab::profile::{
    extract_from_field, extract_profile, far_field_coefficients, integrating_factor, match_profile,
    ode_residual, profile_limits, shoot_profile, shoot_profile_with, MatchedProfile,
    ShootingOptions,
};
use kslab::specfun::QuadratureSpec;

fn params() -> ModelParams {
    ModelParams::new(3, 0.5).unwrap()
}

fn matched() -> &'static MatchedProfile {
    static CELL: OnceLock<MatchedProfile> = OnceLock::new();
    CELL.get_or_init(|| match_profile(&params(), 20.0, 1e-10).unwrap())
}

#[test]
fn phi_vanishes_with_a() {
    let p = params();
    let small = shoot_profile(&p, 1e-8, 20.0).unwrap();
    assert!(small.phi.abs() < 1e-7, "{}", small.phi);
}

#[test]
fn matched_profile_meets_far_field_and_lower_bound() {
    let m = matched();
    assert!((m.shot.phi - 0.5).abs() <= 1e-8);
    assert!(m.a_star >= 0.5);
    assert!(!m.continuation);
    // the bracket straddles the root
    let p = params();
    let lo = shoot_profile(&p, m.bracket.0, 20.0).unwrap().phi;
    let hi = shoot_profile(&p, m.bracket.1, 20.0).unwrap().phi;
    assert!(lo <= 0.5 + 1e-10 && hi >= 0.5 - 1e-10, "{lo} {hi}");
}

#[test]
fn matching_is_insensitive_to_the_matching_radius() {
    let base = matched().a_star;
    for y_max in [15.0, 30.0] {
        let a = match_profile(&params(), y_max, 1e-10).unwrap().a_star;
        assert!(
            (a - base).abs() <= 1e-8 * base,
            "y_max={y_max}: {a} vs {base}"
        );
    }
}

#[test]
fn start_point_does_not_matter() {
    let p = params();
    let a = matched().a_star;
    let coarse = shoot_profile(&p, a, 20.0).unwrap();
    let opts = ShootingOptions {
        y0: 5e-4,
        ..Default::default()
    };
    let fine = shoot_profile_with(&p, a, 20.0, &opts).unwrap();
    assert!((coarse.phi - fine.phi).abs() < 1e-11);
}

#[test]
fn shooting_profile_solves_the_ode() {
    let prof = &matched().shot.profile;
    let res = ode_residual(prof);
    let worst = prof
        .y_nodes()
        .iter()
        .zip(&res)
        .filter(|(&y, _)| (2e-3..=10.0).contains(&y))
        .map(|(_, &r)| r)
        .fold(0.0, f64::max);
    assert!(worst <= 1e-7, "{worst}");
}

#[test]
fn profile_invariants() {
    let p = params();
    let prof = &matched().shot.profile;
    assert!(prof.bound_violation() <= 1e-12);
    assert!(prof.monotonicity_violation() == 0.0);
    assert!(
        prof.mass_consistency() <= 1e-8,
        "{}",
        prof.mass_consistency()
    );
    assert!(prof.u_values().iter().all(|&u| u > 0.0));
    // above the lower barrier at t = 1
    let lower = BarrierSpec::lower(p).unwrap();
    let q = QuadratureSpec::tanh_sinh(1e-12);
    for (&y, &m) in prof
        .y_nodes()
        .iter()
        .zip(prof.m_values())
        .skip(1)
        .step_by(25)
    {
        let b = barrier_value(&lower, 1.0, y, &q).unwrap();
        assert!(p.normalize(y, m - b) >= -1e-4, "y={y}");
    }
    // M*(t, r) = t^{d/2−1} 𝓜(r/√t) obeys the parabolic scaling exactly
    for (t, r, s) in [(1.0, 1.0, 2.0f64), (0.5, 3.0, 0.7)] {
        let lhs = s.powf(-1.0) * prof.rescaled_mass(s * s * t, s * r);
        assert!((lhs - prof.rescaled_mass(t, r)).abs() <= 1e-12 * lhs);
    }
}

#[test]
fn small_epsilon_approaches_the_linear_limit() {
    let p = ModelParams::new(3, 0.01).unwrap();
    let ratio = match_profile(&p, 20.0, 1e-12).unwrap().a_star / 0.01;
    assert!((1.0..1.02).contains(&ratio), "{ratio}");
}

#[test]
fn four_dimensional_profile() {
    let p = ModelParams::new(4, 0.25).unwrap();
    let m = match_profile(&p, 20.0, 1e-10).unwrap();
    assert!(m.a_star >= 0.25);
}

#[test]
fn integrating_factor_identities() {
    let prof = &matched().shot.profile;
    let d = 3.0;
    for y_star in [1.0, 2.0] {
        let f = integrating_factor(prof, y_star).unwrap();
        assert_eq!(f.at_anchor(), (0.25 * y_star * y_star).exp());
        assert!(f.at_origin() > 0.0 && f.at_origin().is_finite());
        let y = prof.y_nodes();
        let fv = f.values();
        let k = y.partition_point(|&v| v < y_star);
        assert!(fv[k..].windows(2).all(|w| w[1] > w[0]));
        // (Uf)′ = (d−2)/2 (f′ − (y/2) f), divided through by Uf
        let u = prof.u_values();
        let lf = f.log_values();
        for i in (1..y.len() - 1).filter(|&i| y[i] >= 0.2 && y[i] <= 10.0) {
            let h = y[i + 1] - y[i - 1];
            let dlf = (lf[i + 1] - lf[i - 1]) / h;
            let dlu = (u[i + 1].ln() - u[i - 1].ln()) / h;
            let rhs = 0.5 * (d - 2.0) * (dlf - 0.5 * y[i]) / u[i];
            let scale = dlu.abs() + dlf.abs() + rhs.abs();
            assert!(
                (dlu + dlf - rhs).abs() <= 1e-6 * scale,
                "y={}: {:e}",
                y[i],
                (dlu + dlf - rhs).abs() / scale
            );
        }
    }
}

#[test]
fn limit_diagnostics() {
    let prof = &matched().shot.profile;
    let lim = profile_limits(prof, &integrating_factor(prof, 1.0).unwrap()).unwrap();
    assert!(lim.estimator_spread <= 1e-4, "{lim:?}");
    assert!(lim.u0_direct.min(lim.u0_extrapolated).min(lim.u0_explicit) >= 0.5 - 1e-4);
    assert_eq!(lim.y_star_alt, 2.0);
    assert!(lim.anchor_spread <= 1e-6, "{lim:?}");
    assert!((0.9..=1.1).contains(&lim.tail_ratio));
    assert!(lim.u_max <= lim.u_cap * (1.0 + 1e-3));
    // the far field is 2ε(d−2)/y² to leading order
    assert!(
        (lim.u_at_y_max - 2.0 * 0.5 / 400.0).abs() < 1e-5,
        "{}",
        lim.u_at_y_max
    );
}

#[test]
fn chandrasekhar_field_is_its_own_profile() {
    let p = ModelParams::new(3, 1.0).unwrap();
    let g = Arc::new(GridSpec::uniform(30.0, 3000).build().unwrap());
    let values = MassField::chandrasekhar(p, g.clone()).into_values();
    for t in [1.0, 4.0] {
        let field = MassField::new(p, g.clone(), t, values.clone()).unwrap();
        let prof = extract_from_field(&field, 10.0).unwrap();
        for (i, &y) in prof.y_nodes().iter().enumerate().filter(|(_, &y)| y >= 0.5) {
            let m = 2.0 * p.sigma_d() * y;
            assert!((prof.m_values()[i] - m).abs() <= 1e-12 * m);
            assert!(
                (prof.u_values()[i] * y * y / 2.0 - 1.0).abs() <= 1e-3,
                "y={y}"
            );
        }
    }
}

#[test]
fn extraction_from_homogeneous_datum_matches_shooting() {
    let p = params();
    let grid = GridSpec::geometric(60.0, 2048);
    let g = Arc::new(grid.build().unwrap());
    let cfg = SolverConfig::new(grid, 2.5e-4, 1.0).with_scheme(TimeScheme::Bdf2);
    let run = solve_from(MassField::homogeneous(p, g), &cfg).unwrap();
    let extracted = extract_profile(&run, 1.0, 20.0).unwrap();
    let dist = extracted.weighted_distance(&matched().shot.profile);
    assert!(dist <= 1e-3, "{dist}");
    // far field of the run follows the asymptotic series
    let k = extracted.y_nodes().partition_point(|&y| y < 8.0);
    let y = extracted.y_nodes()[k];
    let series: f64 = far_field_coefficients(3.0, 0.5, 4)
        .iter()
        .enumerate()
        .map(|(j, q)| q * y.powi(-2 * j as i32))
        .sum();
    assert!(
        (extracted.normalized()[k] - series).abs() <= 1e-3,
        "{} {series}",
        extracted.normalized()[k]
    );
}

#[test]
fn truncated_runs_approach_the_profile() {
    let p = params();
    let cfg = SolverConfig::new(GridSpec::geometric(100.0, 1024), 4e-3, 4.0)
        .with_scheme(TimeScheme::Bdf2)
        .with_snapshots(vec![1.0]);
    let run = solve(&p, &TruncationSpec::new(&p, 1.0).unwrap(), &cfg).unwrap();
    let shot = &matched().shot.profile;
    let d1 = extract_profile(&run, 1.0, 20.0)
        .unwrap()
        .weighted_distance(shot);
    let d4 = extract_profile(&run, 4.0, 20.0)
        .unwrap()
        .weighted_distance(shot);
    assert!(d4 < d1, "{d1} {d4}");
}

#[test]
fn extraction_outside_the_grid_is_rejected() {
    let p = params();
    let cfg = SolverConfig::new(GridSpec::geometric(10.0, 128), 1e-2, 1.0);
    let run = solve(&p, &TruncationSpec::new(&p, 1.0).unwrap(), &cfg).unwrap();
    assert!(extract_profile(&run, 1.0, 20.0).is_err());
    assert!(extract_profile(&run, 0.3, 5.0).is_err());
}
