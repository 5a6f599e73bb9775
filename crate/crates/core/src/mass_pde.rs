//! Finite-difference solver for the mass equation
//!
//! ```text
//! M_t = M_rr − ((d−1)/r) M_r + M M_r / (σ_d r^{d−1}),   M(t, 0) = 0,
//! ```
//!
//! and for its linear Bessel-drift relative `M_t = M_rr − (λ/r) M_r`.
//!
//! Both are written as `M_t = M_rr − (λ_i/r) M_r` with a node-local drift
//! exponent (`λ_i = d − 1 − M_i/(σ_d r_i^{d−2})` in the nonlinear case). The
//! spatial stencil at node `i` is the unique three-point formula that is
//! exact on `{1, r^p, r^{p+2}}`, `p = λ_i + 1`. Its weights are positive, so
//! every implicit step solves an M-matrix system, and the Chandrasekhar
//! field `2σ_d r^{d−2}` is in the discrete kernel.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::barrier::{barrier_value, BarrierSpec};
use crate::error::{Error, Result};
use crate::grid::{MonotoneCubic, RadialGrid, DEFAULT_STRETCH};
use crate::model::{MassField, ModelParams, TruncationSpec};
use crate::specfun::QuadratureSpec;

/// Recipe for a radial grid, kept in configs and manifests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub r_max: f64,
    pub intervals: usize,
    /// Geometric stretching exponent; `None` for a uniform grid.
    pub stretch: Option<f64>,
}

impl GridSpec {
    pub fn geometric(r_max: f64, intervals: usize) -> Self {
        Self {
            r_max,
            intervals,
            stretch: Some(DEFAULT_STRETCH),
        }
    }

    pub fn uniform(r_max: f64, intervals: usize) -> Self {
        Self {
            r_max,
            intervals,
            stretch: None,
        }
    }

    pub fn build(&self) -> Result<RadialGrid> {
        match self.stretch {
            Some(alpha) => RadialGrid::geometric(self.r_max, self.intervals, alpha),
            None => RadialGrid::uniform(self.r_max, self.intervals),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepPolicy {
    Fixed {
        dt: f64,
    },
    /// Step doubling on the normalized field, accepting steps whose
    /// estimated local error is below `tol`.
    Adaptive {
        dt_initial: f64,
        tol: f64,
        dt_min: f64,
        dt_max: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TimeScheme {
    /// Backward Euler with the drift exponent lagged one step.
    ImexEuler,
    /// Variable-step BDF2 with an extrapolated drift exponent.
    Bdf2,
    /// Backward Euler with the drift exponent iterated to convergence.
    ImplicitEuler { max_iter: u32, tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriftMode {
    /// The nonlinear mass equation.
    Full,
    /// `M_t = M_rr − (λ/r) M_r` with a fixed exponent.
    Linear { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OuterBoundary {
    /// `M(t, r_max)` held at its initial value.
    Frozen,
    /// `M(t, r_max)` taken from an explicit barrier solution.
    Barrier { spec: BarrierSpec },
}

/// Cap on the density proxy `max_i M_i/(σ_d r_i^d)` when none is
/// configured: `100/r_1²`. A collapsing solution piles its mass into the
/// first cell, where the proxy saturates near `M/r_1^d` instead of
/// diverging, so a fixed cap may never trigger. The singular stationary
/// field sits at `2/r_1²`, well below the cap.
pub fn resolution_blowup_cap(grid: &RadialGrid) -> f64 {
    let r1 = grid.nodes()[1];
    100.0 / (r1 * r1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid: GridSpec,
    pub step: StepPolicy,
    pub scheme: TimeScheme,
    pub mode: DriftMode,
    pub outer: OuterBoundary,
    pub t_end: f64,
    /// Output times; `t_end` is always added.
    pub snapshots: Vec<f64>,
    /// `None` selects [`resolution_blowup_cap`].
    pub blowup_cap: Option<f64>,
    /// Used for barrier boundary values.
    pub quad: QuadratureSpec,
}

impl SolverConfig {
    pub fn new(grid: GridSpec, dt: f64, t_end: f64) -> Self {
        Self {
            grid,
            step: StepPolicy::Fixed { dt },
            scheme: TimeScheme::ImexEuler,
            mode: DriftMode::Full,
            outer: OuterBoundary::Frozen,
            t_end,
            snapshots: Vec::new(),
            blowup_cap: None,
            quad: QuadratureSpec::tanh_sinh(1e-12),
        }
    }

    pub fn with_snapshots(mut self, snapshots: Vec<f64>) -> Self {
        self.snapshots = snapshots;
        self
    }

    pub fn with_scheme(mut self, scheme: TimeScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_mode(mut self, mode: DriftMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_outer(mut self, outer: OuterBoundary) -> Self {
        self.outer = outer;
        self
    }

    pub fn with_step(mut self, step: StepPolicy) -> Self {
        self.step = step;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        match self.step {
            StepPolicy::Fixed { dt } if !(dt > 0.0 && dt.is_finite()) => {
                return bad(format!("dt must be positive, got {dt}"));
            }
            StepPolicy::Adaptive {
                dt_initial,
                tol,
                dt_min,
                dt_max,
            } => {
                if !(dt_initial > 0.0 && tol > 0.0 && dt_min > 0.0 && dt_min <= dt_max) {
                    return bad(
                        "adaptive step policy needs positive dt_initial, tol and dt_min <= dt_max"
                            .into(),
                    );
                }
                if self.scheme == TimeScheme::Bdf2 {
                    return bad("adaptive stepping is only available for one-step schemes".into());
                }
            }
            _ => {}
        }
        if let TimeScheme::ImplicitEuler { max_iter, tol } = self.scheme {
            if max_iter == 0 || !(tol > 0.0) {
                return bad("implicit Euler needs max_iter >= 1 and tol > 0".into());
            }
        }
        if let Some(t) = self
            .snapshots
            .iter()
            .find(|t| !(**t >= 0.0 && **t <= self.t_end))
        {
            return bad(format!("snapshot time {t} outside [0, {}]", self.t_end));
        }
        if matches!(self.blowup_cap, Some(c) if !(c > 0.0)) {
            return bad("blow-up cap must be positive".into());
        }
        self.quad.validate()
    }

    /// Sorted, deduplicated output times in `[t_start, t_end]`, ending at `t_end`.
    fn schedule(&self, t_start: f64) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .snapshots
            .iter()
            .copied()
            .filter(|&t| t >= t_start)
            .chain(std::iter::once(self.t_end))
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        times
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub steps: usize,
    pub rejected: usize,
    pub implicit_iterations: usize,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl StepStats {
    fn record(&mut self, dt: f64) {
        if self.steps == 0 {
            self.dt_min = dt;
            self.dt_max = dt;
        } else {
            self.dt_min = self.dt_min.min(dt);
            self.dt_max = self.dt_max.max(dt);
        }
        self.steps += 1;
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub params: ModelParams,
    pub config: SolverConfig,
    pub snapshots: Vec<MassField>,
    /// Largest `M/(2σ_d r^{d−2}) − ε` seen at any snapshot.
    pub bound_violation: f64,
    /// Largest normalized decrease of `M` in `r` seen at any snapshot.
    pub monotonicity_violation: f64,
    pub stats: StepStats,
    /// The density-proxy cap in force during the run.
    pub blowup_cap: f64,
}

impl SolveReport {
    fn new(params: ModelParams, config: SolverConfig, blowup_cap: f64) -> Self {
        Self {
            blowup_cap,
            params,
            config,
            snapshots: Vec::new(),
            bound_violation: 0.0,
            monotonicity_violation: 0.0,
            stats: StepStats::default(),
        }
    }

    fn push(&mut self, field: MassField) {
        self.bound_violation = self.bound_violation.max(field.bound_violation());
        self.monotonicity_violation = self
            .monotonicity_violation
            .max(field.monotonicity_violation());
        self.snapshots.push(field);
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t()).collect()
    }

    pub fn snapshot_at(&self, t: f64) -> Result<&MassField> {
        self.snapshots
            .iter()
            .find(|s| (s.t() - t).abs() <= 1e-10 * t.abs().max(1.0))
            .ok_or(Error::MissingSnapshot(t))
    }

    pub fn last(&self) -> &MassField {
        self.snapshots
            .last()
            .expect("a report always holds the final snapshot")
    }
}

/// Stencil weights `(A, B)` of `M_rr − (λ/r) M_r ≈ A(M_{i+1}−M_i) + B(M_{i−1}−M_i)`.
pub(crate) fn drift_stencil(rm: f64, r: f64, rp: f64, lambda: f64) -> (f64, f64) {
    let p = lambda + 1.0;
    let lp = (rp / r).ln();
    let lm = if rm > 0.0 {
        (rm / r).ln()
    } else {
        f64::NEG_INFINITY
    };
    // (x^p − 1)/p without cancellation, continuous through p = 0
    let e = |l: f64| {
        if p.abs() < 1e-12 {
            l
        } else {
            (p * l).exp_m1() / p
        }
    };
    let a = e(lp);
    let b = -e(lm);
    let q = p + 2.0;
    let aq = (q * lp).exp_m1();
    let bq = -(q * lm).exp_m1();
    let ratio = a / b;
    let denom = aq - ratio * bq;
    let big_a = 2.0 * q / (r * r * denom);
    let big_b = big_a * ratio;
    if big_a > 0.0 && big_b > 0.0 && big_a.is_finite() && big_b.is_finite() {
        return (big_a, big_b);
    }
    // outside the range where the exact-basis stencil is positive: central
    // diffusion with upwinded drift
    let (hm, hp) = (r - rm, rp - r);
    let diff_p = 2.0 / (hp * (hp + hm));
    let diff_m = 2.0 / (hm * (hp + hm));
    let v = lambda / r;
    if v >= 0.0 {
        (diff_p, diff_m + v / hm)
    } else {
        (diff_p - v / hp, diff_m)
    }
}

/// Node-local drift exponents for the interior nodes (index 0 unused).
fn drift_exponents(r: &[f64], m: &[f64], params: &ModelParams, mode: DriftMode, out: &mut [f64]) {
    match mode {
        DriftMode::Linear { lambda } => out.iter_mut().for_each(|l| *l = lambda),
        DriftMode::Full => {
            let d = params.d() as i32;
            let sigma = params.sigma_d();
            for i in 1..r.len() - 1 {
                out[i] = (d - 1) as f64 - m[i] / (sigma * r[i].powi(d - 2));
            }
        }
    }
}

/// Solve `γ M_i − dt·L_i M = rhs_i` for interior nodes with `M_0 = 0` and
/// `M_N = boundary`.
fn implicit_solve(
    r: &[f64],
    lambda: &[f64],
    gamma: f64,
    dt: f64,
    rhs: &[f64],
    boundary: f64,
) -> Result<Vec<f64>> {
    let n = r.len();
    let interior = n - 2;
    let mut sub = vec![0.0; interior];
    let mut diag = vec![0.0; interior];
    let mut sup = vec![0.0; interior];
    let mut b = vec![0.0; interior];
    for k in 0..interior {
        let i = k + 1;
        let (a_c, b_c) = drift_stencil(r[i - 1], r[i], r[i + 1], lambda[i]);
        sub[k] = -dt * b_c;
        diag[k] = gamma + dt * (a_c + b_c);
        sup[k] = -dt * a_c;
        b[k] = rhs[i];
    }
    b[interior - 1] -= sup[interior - 1] * boundary;
    let x = thomas(&sub, &diag, &sup, &b)?;
    let mut out = Vec::with_capacity(n);
    out.push(0.0);
    out.extend_from_slice(&x);
    out.push(boundary);
    Ok(out)
}

/// Tridiagonal solve; `sub[0]` and `sup[n−1]` are ignored.
pub(crate) fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return Err(Error::SingularSystem { row: 0 });
    }
    c[0] = sup[0] / pivot;
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - sub[i] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::SingularSystem { row: i });
        }
        c[i] = if i + 1 < n { sup[i] / pivot } else { 0.0 };
        x[i] = (rhs[i] - sub[i] * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

struct Stepper<'a> {
    params: ModelParams,
    config: &'a SolverConfig,
    r: Vec<f64>,
    lambda: Vec<f64>,
    frozen_boundary: f64,
    cap: f64,
    /// Previous level and step for BDF2.
    history: Option<(Vec<f64>, f64)>,
}

impl<'a> Stepper<'a> {
    fn new(initial: &MassField, config: &'a SolverConfig) -> Self {
        let r = initial.nodes().to_vec();
        let n = r.len();
        Self {
            params: *initial.params(),
            config,
            r,
            lambda: vec![0.0; n],
            frozen_boundary: initial.values()[n - 1],
            cap: config
                .blowup_cap
                .unwrap_or_else(|| resolution_blowup_cap(initial.grid())),
            history: None,
        }
    }

    fn boundary(&self, t: f64) -> Result<f64> {
        match self.config.outer {
            OuterBoundary::Frozen => Ok(self.frozen_boundary),
            OuterBoundary::Barrier { spec } => {
                barrier_value(&spec, t, *self.r.last().unwrap(), &self.config.quad)
            }
        }
    }

    /// Backward Euler step with exponents from `lag`; returns the new level.
    fn euler(&mut self, m: &[f64], lag: &[f64], dt: f64, boundary: f64) -> Result<Vec<f64>> {
        drift_exponents(
            &self.r,
            lag,
            &self.params,
            self.config.mode,
            &mut self.lambda,
        );
        implicit_solve(&self.r, &self.lambda, 1.0, dt, m, boundary)
    }

    /// One step of the configured scheme from `(t, m)`.
    fn advance(&mut self, t: f64, m: &[f64], dt: f64, stats: &mut StepStats) -> Result<Vec<f64>> {
        let boundary = self.boundary(t + dt)?;
        match self.config.scheme {
            TimeScheme::ImexEuler => self.euler(m, m, dt, boundary),
            TimeScheme::ImplicitEuler { max_iter, tol } => {
                let mut iterate = self.euler(m, m, dt, boundary)?;
                stats.implicit_iterations += 1;
                if matches!(self.config.mode, DriftMode::Linear { .. }) {
                    return Ok(iterate);
                }
                for _ in 1..max_iter {
                    let next = self.euler(m, &iterate, dt, boundary)?;
                    stats.implicit_iterations += 1;
                    let change = normalized_distance(&self.params, &self.r, &next, &iterate);
                    iterate = next;
                    if change <= tol {
                        return Ok(iterate);
                    }
                }
                Err(Error::Divergent(format!(
                    "fixed-point iteration for the drift exponent did not reach {tol:e} in {max_iter} sweeps at t = {t}"
                )))
            }
            TimeScheme::Bdf2 => {
                let next = match &self.history {
                    None => self.euler(m, m, dt, boundary)?,
                    Some((prev, dt_prev)) => {
                        let w = dt / dt_prev;
                        let gamma = (1.0 + 2.0 * w) / (1.0 + w);
                        let rhs: Vec<f64> = m
                            .iter()
                            .zip(prev)
                            .map(|(a, b)| (1.0 + w) * a - w * w / (1.0 + w) * b)
                            .collect();
                        let extrapolated: Vec<f64> = m
                            .iter()
                            .zip(prev)
                            .map(|(a, b)| (1.0 + w) * a - w * b)
                            .collect();
                        drift_exponents(
                            &self.r,
                            &extrapolated,
                            &self.params,
                            self.config.mode,
                            &mut self.lambda,
                        );
                        implicit_solve(&self.r, &self.lambda, gamma, dt, &rhs, boundary)?
                    }
                };
                self.history = Some((m.to_vec(), dt));
                Ok(next)
            }
        }
    }

    fn check_blowup(&self, t: f64, m: &[f64]) -> Result<()> {
        let d = self.params.d() as i32;
        let sigma = self.params.sigma_d();
        let mut proxy: f64 = 0.0;
        for (mi, ri) in m.iter().zip(&self.r).skip(1) {
            let v = mi / (sigma * ri.powi(d));
            if !v.is_finite() {
                proxy = f64::INFINITY;
                break;
            }
            proxy = proxy.max(v);
        }
        if proxy > self.cap {
            return Err(Error::BlowUp {
                t,
                value: proxy,
                cap: self.cap,
            });
        }
        Ok(())
    }
}

fn normalized_distance(params: &ModelParams, r: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (1..r.len()).fold(0.0, |acc, i| {
        acc.max(params.normalize(r[i], (a[i] - b[i]).abs()))
    })
}

/// One backward-Euler step of the configured mode with the drift exponent
/// lagged, from `field` to `field.t() + dt`.
pub fn step(field: &MassField, dt: f64, config: &SolverConfig) -> Result<MassField> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    check_grid(field, config)?;
    let mut stepper = Stepper::new(field, config);
    let boundary = stepper.boundary(field.t() + dt)?;
    let next = stepper.euler(field.values(), field.values(), dt, boundary)?;
    stepper.check_blowup(field.t() + dt, &next)?;
    Ok(field.with_values(field.t() + dt, next))
}

fn check_grid(field: &MassField, config: &SolverConfig) -> Result<()> {
    if field.nodes().len() != config.grid.intervals + 1 {
        return Err(Error::Mismatch(format!(
            "field has {} nodes but the configured grid has {}",
            field.nodes().len(),
            config.grid.intervals + 1
        )));
    }
    Ok(())
}

/// Evolve the truncated datum `M₀ᴷ` on the configured grid.
pub fn solve(
    params: &ModelParams,
    trunc: &TruncationSpec,
    config: &SolverConfig,
) -> Result<SolveReport> {
    config.validate()?;
    let grid = Arc::new(config.grid.build()?);
    solve_from(MassField::truncated(*params, trunc, grid), config)
}

/// Evolve an arbitrary initial field from `initial.t()` to `config.t_end`.
pub fn solve_from(initial: MassField, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    check_grid(&initial, config)?;
    let t0 = initial.t();
    if !(config.t_end > t0) {
        return Err(Error::InvalidParameter(format!(
            "t_end = {} must exceed the initial time {t0}",
            config.t_end
        )));
    }
    let schedule = config.schedule(t0);
    let mut stepper = Stepper::new(&initial, config);
    let mut report = SolveReport::new(*initial.params(), config.clone(), stepper.cap);
    let mut t = t0;
    let mut m = initial.values().to_vec();
    let mut adaptive_dt = match config.step {
        StepPolicy::Adaptive { dt_initial, .. } => dt_initial,
        StepPolicy::Fixed { dt } => dt,
    };
    for &target in &schedule {
        if target <= t0 {
            report.push(initial.with_values(t0, m.clone()));
            continue;
        }
        match config.step {
            StepPolicy::Fixed { dt } => {
                let count = ((target - t) / dt - 1e-9).ceil().max(1.0) as usize;
                let h = (target - t) / count as f64;
                for k in 0..count {
                    let t_next = if k + 1 == count { target } else { t + h };
                    m = stepper.advance(t, &m, t_next - t, &mut report.stats)?;
                    report.stats.record(t_next - t);
                    t = t_next;
                    stepper.check_blowup(t, &m)?;
                }
            }
            StepPolicy::Adaptive {
                tol,
                dt_min,
                dt_max,
                ..
            } => {
                while t < target {
                    let mut dt = adaptive_dt.min(dt_max).min(target - t);
                    let last = dt >= target - t;
                    let full = stepper.advance(t, &m, dt, &mut report.stats)?;
                    let half = stepper.advance(t, &m, 0.5 * dt, &mut report.stats)?;
                    let half = stepper.advance(t + 0.5 * dt, &half, 0.5 * dt, &mut report.stats)?;
                    let err = normalized_distance(&stepper.params, &stepper.r, &full, &half);
                    let factor = if err > 0.0 {
                        (0.9 * (tol / err).sqrt()).clamp(0.2, 2.0)
                    } else {
                        2.0
                    };
                    if err <= tol {
                        let t_next = if last { target } else { t + dt };
                        dt = t_next - t;
                        report.stats.record(dt);
                        m = half;
                        t = t_next;
                        stepper.check_blowup(t, &m)?;
                        if !last {
                            adaptive_dt = dt * factor;
                        }
                    } else {
                        report.stats.rejected += 1;
                        adaptive_dt = dt * factor;
                        if adaptive_dt < dt_min {
                            return Err(Error::StepUnderflow { t, dt: adaptive_dt });
                        }
                    }
                }
            }
        }
        report.push(initial.with_values(target, m.clone()));
    }
    Ok(report)
}

/// Most negative normalized `upper − lower` over all snapshots and nodes,
/// or 0 when the reports are ordered.
pub fn verify_comparison(lower: &SolveReport, upper: &SolveReport) -> Result<f64> {
    if lower.snapshots.len() != upper.snapshots.len() {
        return Err(Error::Mismatch(format!(
            "{} vs {} snapshots",
            lower.snapshots.len(),
            upper.snapshots.len()
        )));
    }
    let mut worst = f64::INFINITY;
    for (lo, up) in lower.snapshots.iter().zip(&upper.snapshots) {
        if (lo.t() - up.t()).abs() > 1e-10 * lo.t().abs().max(1.0) {
            return Err(Error::Mismatch(format!(
                "snapshot times {} and {} differ",
                lo.t(),
                up.t()
            )));
        }
        if lo.nodes() != up.nodes() {
            return Err(Error::Mismatch("reports use different grids".into()));
        }
        let params = lo.params();
        for (i, &r) in lo.nodes().iter().enumerate().skip(1) {
            worst = worst.min(params.normalize(r, up.values()[i] - lo.values()[i]));
        }
    }
    Ok(if worst.is_finite() {
        worst.min(0.0)
    } else {
        0.0
    })
}

/// `M / r^{d−2}` interpolated monotonically in `r`.
fn reduced_interpolant(field: &MassField) -> Result<MonotoneCubic> {
    let d = field.params().d() as i32;
    let r = field.nodes();
    let q: Vec<f64> = r
        .iter()
        .zip(field.values())
        .map(|(&x, &m)| if x > 0.0 { m / x.powi(d - 2) } else { 0.0 })
        .collect();
    MonotoneCubic::new(r, &q)
}

/// Sup of the normalized discrepancy in the identity
/// `s^{2−d} M^K(s²t, s r) = M^{Ks}(t, r)`.
///
/// Both runs use the configured grid. The identity is checked at every
/// positive snapshot time `t` of `config` (and `t_end`), with the `K` run
/// carried to `s²t`, on the nodes `r ≤ r_max/(4·max(s, 1))`.
pub fn verify_scaling(
    params: &ModelParams,
    k: f64,
    scale: f64,
    config: &SolverConfig,
) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive, got {scale}"
        )));
    }
    config.validate()?;
    let times: Vec<f64> = config
        .schedule(0.0)
        .into_iter()
        .filter(|&t| t > 0.0)
        .collect();
    let s2 = scale * scale;
    let config_k = SolverConfig {
        t_end: s2 * config.t_end,
        snapshots: times.iter().map(|t| s2 * t).collect(),
        ..config.clone()
    };
    let config_ks = SolverConfig {
        snapshots: times.clone(),
        ..config.clone()
    };
    let trunc_k = TruncationSpec::new(params, k)?;
    let trunc_ks = TruncationSpec::new(params, k * scale)?;
    let (run_k, run_ks) = join(
        || solve(params, &trunc_k, &config_k),
        || solve(params, &trunc_ks, &config_ks),
    );
    let (run_k, run_ks) = (run_k?, run_ks?);
    let d = params.d() as i32;
    let r_eval = config.grid.r_max / (4.0 * scale.max(1.0));
    let mut worst: f64 = 0.0;
    for &t in &times {
        let big = reduced_interpolant(run_k.snapshot_at(s2 * t)?)?;
        let small = run_ks.snapshot_at(t)?;
        for (i, &r) in small.nodes().iter().enumerate().skip(1) {
            if r > r_eval {
                break;
            }
            // s^{2−d} M(s²t, s r) / r^{d−2} = Q(s r) with Q = M/r^{d−2}
            let lhs = big.eval(scale * r);
            let rhs = small.values()[i] / r.powi(d - 2);
            worst = worst.max((lhs - rhs).abs() / (2.0 * params.sigma_d()));
        }
    }
    Ok(worst)
}

#[cfg(feature = "parallel")]
pub(crate) fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    rayon::join(a, b)
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA,
    B: FnOnce() -> RB,
{
    (a(), b())
}

/// Standard three-point discretization of the right-hand side
/// `M_rr − ((d−1)/r)M_r + M M_r/(σ_d r^{d−1})` at node `i`, returned as its
/// individual terms.
pub(crate) fn mass_operator_terms(
    r: &[f64],
    m: &[f64],
    params: &ModelParams,
    i: usize,
) -> [f64; 3] {
    let (w1, w2) = crate::grid::three_point_weights(r[i - 1], r[i], r[i + 1]);
    let m_r = w1[0] * m[i - 1] + w1[1] * m[i] + w1[2] * m[i + 1];
    let m_rr = w2[0] * m[i - 1] + w2[1] * m[i] + w2[2] * m[i + 1];
    let d = params.dim();
    [
        m_rr,
        -(d - 1.0) / r[i] * m_r,
        m[i] * m_r / (params.sigma_d() * r[i].powi(params.d() as i32 - 1)),
    ]
}

/// Normalized residual of the stationary mass equation on `[lo, hi]`:
/// `max_i |Σ terms| / Σ |terms|`, each term from standard centered
/// differences (independent of the solver stencil).
pub fn stationary_residual(field: &MassField, lo: f64, hi: f64) -> f64 {
    let r = field.nodes();
    let n = r.len();
    let mut worst: f64 = 0.0;
    for i in field.grid().window(lo, hi) {
        if i == 0 || i + 1 >= n {
            continue;
        }
        let t = mass_operator_terms(r, field.values(), field.params(), i);
        let scale: f64 = t.iter().map(|x| x.abs()).sum();
        if scale > 0.0 {
            worst = worst.max(t.iter().sum::<f64>().abs() / scale);
        }
    }
    worst
}

/// Normalized time-centered residual of the mass equation between two
/// snapshots on `[lo, hi]`, by standard centered differences.
pub fn local_mass_residual(prev: &MassField, next: &MassField, lo: f64, hi: f64) -> Result<f64> {
    if prev.nodes() != next.nodes() {
        return Err(Error::Mismatch("snapshots use different grids".into()));
    }
    let dt = next.t() - prev.t();
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(
            "snapshots must be in increasing time order".into(),
        ));
    }
    let r = prev.nodes();
    let n = r.len();
    let mut worst: f64 = 0.0;
    for i in prev.grid().window(lo, hi) {
        if i == 0 || i + 1 >= n {
            continue;
        }
        let a = mass_operator_terms(r, prev.values(), prev.params(), i);
        let b = mass_operator_terms(r, next.values(), next.params(), i);
        let m_t = (next.values()[i] - prev.values()[i]) / dt;
        let terms = [
            m_t,
            -0.5 * (a[0] + b[0]),
            -0.5 * (a[1] + b[1]),
            -0.5 * (a[2] + b[2]),
        ];
        let scale: f64 = terms.iter().map(|x| x.abs()).sum();
        if scale > 0.0 {
            worst = worst.max(terms.iter().sum::<f64>().abs() / scale);
        }
    }
    Ok(worst)
}

/// One row of a snapshot export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub t: f64,
    pub r: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "M_normalized")]
    pub m_normalized: f64,
    pub u: f64,
}

pub fn snapshot_rows(field: &MassField) -> Vec<SnapshotRow> {
    let u = field.density();
    let q = field.normalized();
    field
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &r)| SnapshotRow {
            t: field.t(),
            r,
            m: field.values()[i],
            m_normalized: q[i],
            u: u[i],
        })
        .collect()
}
