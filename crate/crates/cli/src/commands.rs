use std::sync::Arc;

use kslab::barrier::{barrier_value, g_bound, g_diagnostic, BarrierSpec};
use kslab::blowup::{classify, compute_threshold, Classification, ThresholdResult};
use kslab::mass_pde::{
    snapshot_rows, solve as run_solver, solve_from, GridSpec, SolverConfig, TimeScheme,
};
use kslab::model::{MassField, ModelParams, TruncationSpec};
use kslab::profile::{
    extract_profile, integrating_factor, match_profile, profile_limits, profile_rows,
    MatchedProfile, SelfSimilarProfile,
};
use kslab::specfun::QuadratureSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checks::{self, CheckContext, CheckOutcome};
use crate::config::{parse_dims, resolve};
use crate::error::{CliError, CliResult};
use crate::manifest::{Relation, Session};
use crate::{
    BarrierArgs, BarrierKind, ConstantArgs, Format, Method, ProfileArgs, Scheme, SolveArgs,
    SweepArgs, VerifyArgs,
};

/// Parameters for a run; `ε > 1` is admitted with a warning.
fn model_params(dim: u32, epsilon: f64) -> CliResult<ModelParams> {
    if epsilon > 1.0 {
        eprintln!("warning: ε = {epsilon} > 1 is supercritical; no existence guarantee applies");
        Ok(ModelParams::experimental(dim, epsilon)?)
    } else {
        if epsilon == 1.0 {
            eprintln!("warning: ε = 1 is the critical case; results carry no guarantee");
        }
        Ok(ModelParams::new(dim, epsilon)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ConstantConfig {
    dim: String,
    tol: f64,
    format: Format,
}

pub fn constant(args: ConstantArgs) -> CliResult<()> {
    let cfg: ConstantConfig = resolve(
        json!({"dim": "3..20", "tol": 1e-10, "format": "csv"}),
        args.common.config.as_deref(),
        &args,
    )?;
    let dims = parse_dims(&cfg.dim)?;
    let quad = QuadratureSpec::adaptive(cfg.tol);
    let rows = dims
        .par_iter()
        .map(|&d| compute_threshold(d, &quad))
        .collect::<kslab::Result<Vec<ThresholdResult>>>()?;
    let mut session = Session::new("constant", args.common.out.clone())?;
    match cfg.format {
        Format::Csv => session.write_csv("constant.csv", &rows)?,
        Format::Json => session.write_json("constant.json", &rows)?,
    }
    for r in &rows {
        session.check(
            format!("chain_margin[d={}]", r.d),
            r.chain_margin(),
            Relation::AtLeast,
            r.error_estimate,
        );
    }
    session.finish(&cfg).map(drop)
}

#[derive(Debug, Serialize, Deserialize)]
struct SolveConfig {
    dim: u32,
    epsilon: f64,
    #[serde(rename = "K")]
    k: f64,
    rmax: f64,
    nr: usize,
    stretch: f64,
    t_end: f64,
    dt: f64,
    snapshots: Vec<f64>,
    scheme: Scheme,
    format: Format,
    bound_tol: f64,
    monotonicity_tol: f64,
}

fn time_scheme(s: Scheme) -> TimeScheme {
    match s {
        Scheme::Imex => TimeScheme::ImexEuler,
        Scheme::Bdf2 => TimeScheme::Bdf2,
        Scheme::Implicit => TimeScheme::ImplicitEuler {
            max_iter: 50,
            tol: 1e-12,
        },
    }
}

fn grid_spec(rmax: f64, nr: usize, stretch: f64) -> GridSpec {
    GridSpec {
        r_max: rmax,
        intervals: nr,
        stretch: (stretch > 0.0).then_some(stretch),
    }
}

pub fn solve(args: SolveArgs) -> CliResult<()> {
    let default_stretch = GridSpec::geometric(1.0, 1).stretch.unwrap_or(0.0);
    let cfg: SolveConfig = resolve(
        json!({"K": 1.0, "rmax": 20.0, "nr": 1024, "stretch": default_stretch, "t_end": 1.0, "dt": 1e-3,
               "snapshots": [], "scheme": "imex", "format": "csv", "bound_tol": 1e-6, "monotonicity_tol": 1e-10}),
        args.common.config.as_deref(),
        &args,
    )?;
    let params = model_params(cfg.dim, cfg.epsilon)?;
    let trunc = TruncationSpec::new(&params, cfg.k)?;
    let solver = SolverConfig::new(grid_spec(cfg.rmax, cfg.nr, cfg.stretch), cfg.dt, cfg.t_end)
        .with_snapshots(cfg.snapshots.clone())
        .with_scheme(time_scheme(cfg.scheme));
    solver.validate()?;
    let mut session = Session::new("solve", args.common.out.clone())?;
    let report = match run_solver(&params, &trunc, &solver) {
        Ok(r) => r,
        Err(e @ (kslab::Error::BlowUp { .. } | kslab::Error::StepUnderflow { .. })) => {
            let payload = match &e {
                kslab::Error::BlowUp { t, value, cap } => {
                    json!({"signal": "blow-up", "t": t, "density_proxy": value, "cap": cap})
                }
                kslab::Error::StepUnderflow { t, dt } => {
                    json!({"signal": "step-underflow", "t": t, "dt": dt})
                }
                _ => unreachable!(),
            };
            let payload = json!({"diagnostic": payload, "note": "a numerical signal, not a proof of blow-up",
                                 "epsilon": cfg.epsilon, "dim": cfg.dim});
            if session.has_out() {
                session.write_json("blowup.json", &payload)?;
                // the manifest records the run even though it stopped early
                let _ = session.finish(&cfg);
            }
            println!("{}", serde_json::to_string(&payload)?);
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    let rows: Vec<_> = report.snapshots.iter().flat_map(snapshot_rows).collect();
    match cfg.format {
        Format::Csv => session.write_csv("snapshots.csv", &rows)?,
        Format::Json => session.write_json("snapshots.json", &rows)?,
    }
    if session.has_out() {
        session.write_json("stats.json", &report.stats)?;
    }
    // the a-priori bound is only available below the critical mass
    if cfg.epsilon < 1.0 {
        session.check(
            "bound_violation",
            report.bound_violation,
            Relation::AtMost,
            cfg.bound_tol,
        );
    }
    session.check(
        "monotonicity_violation",
        report.monotonicity_violation,
        Relation::AtMost,
        cfg.monotonicity_tol,
    );
    session.finish(&cfg).map(drop)
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileConfig {
    dim: u32,
    epsilon: f64,
    ymax: f64,
    method: Method,
    tol: f64,
    y_star: f64,
    #[serde(rename = "K")]
    k: Option<f64>,
    rmax: f64,
    nr: usize,
    dt: f64,
    t_extract: f64,
    distance_tol: f64,
}

#[derive(Serialize)]
struct ProfileDiagnostics<'a> {
    a_star: Option<f64>,
    phi: Option<f64>,
    phi_raw: Option<f64>,
    bracket: Option<(f64, f64)>,
    continuation: Option<bool>,
    trace: Option<&'a [kslab::profile::PhiSample]>,
    limits: Option<kslab::profile::ProfileLimits>,
    cross_distance: Option<f64>,
    extracted_u0: Option<f64>,
}

fn extracted(cfg: &ProfileConfig, params: &ModelParams) -> CliResult<SelfSimilarProfile> {
    let grid = GridSpec::geometric(cfg.rmax, cfg.nr);
    let solver = SolverConfig::new(grid, cfg.dt, cfg.t_extract).with_scheme(TimeScheme::Bdf2);
    let report = match cfg.k {
        Some(k) => run_solver(params, &TruncationSpec::new(params, k)?, &solver)?,
        None => solve_from(
            MassField::homogeneous(*params, Arc::new(grid.build()?)),
            &solver,
        )?,
    };
    Ok(extract_profile(&report, cfg.t_extract, cfg.ymax)?)
}

pub fn profile(args: ProfileArgs) -> CliResult<()> {
    let cfg: ProfileConfig = resolve(
        json!({"dim": 3, "ymax": 20.0, "method": "shoot", "tol": 1e-10, "y_star": 1.0, "K": null, "rmax": 60.0, "nr": 2048,
               "dt": 2.5e-4, "t_extract": 1.0, "distance_tol": 1e-3}),
        args.common.config.as_deref(),
        &args,
    )?;
    let params = model_params(cfg.dim, cfg.epsilon)?;
    let eps = cfg.epsilon;
    let mut session = Session::new("profile", args.common.out.clone())?;
    let mut diag = ProfileDiagnostics {
        a_star: None,
        phi: None,
        phi_raw: None,
        bracket: None,
        continuation: None,
        trace: None,
        limits: None,
        cross_distance: None,
        extracted_u0: None,
    };

    if eps >= 1.0 && cfg.method != Method::Extract {
        return Err(CliError::Usage(format!(
            "no profile is matched at ε = {eps} (shooting needs ε < 1); --method extract still runs"
        )));
    }
    let matched: Option<MatchedProfile> = match cfg.method {
        Method::Shoot | Method::Both => Some(match_profile(&params, cfg.ymax, cfg.tol)?),
        Method::Extract => None,
    };
    let ext = match cfg.method {
        Method::Extract | Method::Both => Some(extracted(&cfg, &params)?),
        Method::Shoot => None,
    };

    if let Some(m) = &matched {
        let prof = &m.shot.profile;
        let factor = integrating_factor(prof, cfg.y_star)?;
        let lim = profile_limits(prof, &factor)?;
        session.write_csv("profile_shoot.csv", &profile_rows(prof, &factor))?;
        session.check(
            "phi_mismatch",
            (m.shot.phi - eps).abs(),
            Relation::AtMost,
            cfg.tol.max(1e-8),
        );
        session.check(
            "a_star_over_epsilon",
            m.a_star / eps,
            Relation::AtLeast,
            1.0,
        );
        let u0 = lim.u0_direct.min(lim.u0_extrapolated).min(lim.u0_explicit);
        session.check("u0_min_estimator", u0, Relation::AtLeast, eps - 1e-4);
        session.check(
            "u0_estimator_spread",
            lim.estimator_spread,
            Relation::AtMost,
            1e-4,
        );
        session.check("y_star_spread", lim.anchor_spread, Relation::AtMost, 1e-6);
        session.check("tail_ratio_low", lim.tail_ratio, Relation::AtLeast, 0.9);
        session.check("tail_ratio_high", lim.tail_ratio, Relation::AtMost, 1.1);
        session.check(
            "u_max_over_cap",
            lim.u_max / lim.u_cap,
            Relation::AtMost,
            1.0 + 1e-3,
        );
        diag.a_star = Some(m.a_star);
        diag.phi = Some(m.shot.phi);
        diag.phi_raw = Some(m.shot.phi_raw);
        diag.bracket = Some(m.bracket);
        diag.continuation = Some(m.continuation);
        diag.trace = Some(&m.trace);
        diag.limits = Some(lim);
    }
    if let Some(e) = &ext {
        let factor = integrating_factor(e, cfg.y_star)?;
        session.write_csv("profile_extract.csv", &profile_rows(e, &factor))?;
        session.check(
            "extract_bound_violation",
            e.bound_violation(),
            Relation::AtMost,
            1e-6,
        );
        diag.extracted_u0 = Some(e.a());
    }
    if let (Some(m), Some(e)) = (&matched, &ext) {
        let dist = e.weighted_distance(&m.shot.profile);
        session.check("cross_distance", dist, Relation::AtMost, cfg.distance_tol);
        diag.cross_distance = Some(dist);
    }
    if session.has_out() {
        session.write_json("diagnostics.json", &diag)?;
    } else {
        eprintln!("{}", serde_json::to_string_pretty(&diag)?);
    }
    session.finish(&cfg).map(drop)
}

#[derive(Debug, Serialize, Deserialize)]
struct BarrierConfig {
    dim: u32,
    epsilon: f64,
    kind: BarrierKind,
    lambda: Option<f64>,
    t: f64,
    rmax: f64,
    n: usize,
    y_star: f64,
    tol: f64,
}

#[derive(Serialize)]
struct BarrierRow {
    r: f64,
    m: f64,
    m_normalized: f64,
}

pub fn barrier(args: BarrierArgs) -> CliResult<()> {
    let cfg: BarrierConfig = resolve(
        json!({"kind": "upper", "lambda": null, "t": 1.0, "rmax": 10.0, "n": 200, "y_star": 1.0, "tol": 1e-12}),
        args.common.config.as_deref(),
        &args,
    )?;
    let params = model_params(cfg.dim, cfg.epsilon)?;
    let spec = match (cfg.lambda, cfg.kind) {
        (Some(l), _) => BarrierSpec::new(params, l, 2.0 * cfg.epsilon * params.sigma_d())?,
        (None, BarrierKind::Upper) => BarrierSpec::upper(params)?,
        (None, BarrierKind::Lower) => BarrierSpec::lower(params)?,
    };
    if cfg.n < 1 {
        return Err(CliError::Usage("need at least one sample".into()));
    }
    let quad = QuadratureSpec::tanh_sinh(cfg.tol);
    let rows = (0..=cfg.n)
        .into_par_iter()
        .map(|i| {
            let r = cfg.rmax * i as f64 / cfg.n as f64;
            let m = if r == 0.0 {
                0.0
            } else {
                barrier_value(&spec, cfg.t, r, &quad)?
            };
            Ok(BarrierRow {
                r,
                m,
                m_normalized: params.normalize(r, m),
            })
        })
        .collect::<kslab::Result<Vec<_>>>()?;
    let mut session = Session::new("barrier", args.common.out.clone())?;
    session.write_csv("barrier.csv", &rows)?;
    let g = g_diagnostic(&spec, cfg.t, cfg.y_star, &quad)?;
    let bound = g_bound(&spec, cfg.y_star)?;
    session.report(&format!(
        "lambda = {}, g = {g:.12}, bound = {bound:.12}",
        spec.lambda()
    ));
    session.check("g_over_bound", g / bound, Relation::AtMost, 1.0);
    session.finish(&cfg).map(drop)
}

#[derive(Debug, Serialize, Deserialize)]
struct VerifyConfig {
    checks: Vec<String>,
    dim: u32,
    epsilon: f64,
    scale: f64,
    fail_fast: bool,
}

pub fn verify(args: VerifyArgs) -> CliResult<()> {
    if args.list {
        for (name, _) in checks::CHECKS {
            println!("{name}");
        }
        return Ok(());
    }
    let mut selected: Vec<String> = Vec::new();
    if let Some(p) = &args.preset {
        let names =
            checks::preset(p).ok_or_else(|| CliError::Usage(format!("unknown preset {p:?}")))?;
        selected.extend(names.into_iter().map(String::from));
    }
    if let Some(c) = &args.checks {
        selected.extend(c.iter().cloned());
    }
    #[derive(Serialize)]
    struct Flags<'a> {
        #[serde(skip_serializing_if = "Vec::is_empty")]
        checks: Vec<String>,
        #[serde(flatten)]
        rest: &'a VerifyArgs,
    }
    let mut cfg: VerifyConfig = resolve(
        json!({"checks": [], "dim": 3, "epsilon": 0.5, "scale": 2.0, "fail_fast": false}),
        args.common.config.as_deref(),
        &Flags {
            checks: selected,
            rest: &args,
        },
    )?;
    cfg.checks.sort();
    cfg.checks.dedup();
    if cfg.checks.is_empty() {
        return Err(CliError::Usage(
            "give --preset or at least one --check (see --list)".into(),
        ));
    }
    let fns = cfg
        .checks
        .iter()
        .map(|n| {
            checks::lookup(n)
                .ok_or_else(|| CliError::Usage(format!("unknown check {n:?} (see --list)")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let ctx = CheckContext {
        params: model_params(cfg.dim, cfg.epsilon)?,
        scale: cfg.scale,
    };

    let outcomes: Vec<(String, kslab::Result<CheckOutcome>)> = if cfg.fail_fast {
        let mut out = Vec::new();
        for (name, f) in cfg.checks.iter().zip(&fns) {
            let r = f(&ctx);
            let stop = !matches!(&r, Ok(o) if o.passed());
            out.push((name.clone(), r));
            if stop {
                break;
            }
        }
        out
    } else {
        cfg.checks
            .par_iter()
            .zip(fns.par_iter())
            .map(|(n, f)| (n.clone(), f(&ctx)))
            .collect()
    };

    let mut session = Session::new("verify", args.common.out.clone())?;
    let mut errors = Vec::new();
    for (name, outcome) in outcomes {
        match outcome {
            Ok(o) => {
                session.record_settings(o.name, o.settings);
                for (what, inv) in o.measurements {
                    let value = inv.value.unwrap_or(f64::NAN);
                    session.check(format!("{name}.{what}"), value, inv.relation, inv.bound);
                }
            }
            Err(e) => {
                session.report(&format!("ERROR {name}: {e}"));
                errors.push(CliError::from(e));
            }
        }
    }
    let result = session.finish(&cfg);
    match (result, errors.into_iter().max_by_key(|e| e.exit_code())) {
        (Err(e), _) => Err(e),
        (Ok(_), Some(e)) => Err(e),
        (Ok(_), None) => Ok(()),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepConfig {
    dim: u32,
    epsilons: Vec<f64>,
    ymax: f64,
    tol: f64,
    format: Format,
}

#[derive(Serialize)]
struct SweepRow {
    epsilon: f64,
    classification: Classification,
    threshold: f64,
    a_star: Option<f64>,
    a_over_epsilon: Option<f64>,
    u0_explicit: Option<f64>,
    phi: Option<f64>,
}

pub fn sweep(args: SweepArgs) -> CliResult<()> {
    let cfg: SweepConfig = resolve(
        json!({"epsilons": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], "ymax": 20.0, "tol": 1e-10, "format": "csv"}),
        args.common.config.as_deref(),
        &args,
    )?;
    if let Some(e) = cfg.epsilons.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(CliError::Usage(format!(
            "epsilon must be positive, got {e}"
        )));
    }
    let quad = QuadratureSpec::adaptive(1e-10);
    let rows = cfg
        .epsilons
        .par_iter()
        .map(|&eps| -> kslab::Result<SweepRow> {
            let (class, threshold) = classify(cfg.dim, eps, &quad)?;
            let mut row = SweepRow {
                epsilon: eps,
                classification: class,
                threshold: threshold.c_value,
                a_star: None,
                a_over_epsilon: None,
                u0_explicit: None,
                phi: None,
            };
            if class == Classification::SubcriticalExists {
                let params = ModelParams::new(cfg.dim, eps)?;
                let m = match_profile(&params, cfg.ymax, cfg.tol)?;
                let lim =
                    profile_limits(&m.shot.profile, &integrating_factor(&m.shot.profile, 1.0)?)?;
                row.a_star = Some(m.a_star);
                row.a_over_epsilon = Some(m.a_star / eps);
                row.u0_explicit = Some(lim.u0_explicit);
                row.phi = Some(m.shot.phi);
            }
            Ok(row)
        })
        .collect::<kslab::Result<Vec<_>>>()?;
    let mut session = Session::new("sweep", args.common.out.clone())?;
    match cfg.format {
        Format::Csv => session.write_csv("sweep.csv", &rows)?,
        Format::Json => session.write_json("sweep.json", &rows)?,
    }
    for r in &rows {
        if let Some(ratio) = r.a_over_epsilon {
            session.check(
                format!("a_star_over_epsilon[eps={}]", r.epsilon),
                ratio,
                Relation::AtLeast,
                1.0,
            );
        }
    }
    session.finish(&cfg).map(drop)
}
