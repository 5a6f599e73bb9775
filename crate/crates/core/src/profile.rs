//! The self-similar profile `M*(t, r) = t^{d/2−1} 𝓜(r/√t)`, `u* = U(x/√t)/t`.
//!
//! `𝓜` solves
//!
//! ```text
//! 𝓜″ + (y/2)𝓜′ − ((d−2)/2)𝓜 − ((d−1)/y)𝓜′ + 𝓜𝓜′/(σ_d y^{d−1}) = 0,   𝓜(0) = 0,
//! ```
//!
//! and `U = 𝓜′/(σ_d y^{d−1})`. The profile is built by shooting on
//! `a = U(0⁺)` until the far field matches `ε·2σ_d y^{d−2}`, or extracted from
//! a long-time PDE run; the integrating factor and limit diagnostics work on
//! either.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cumulative_integral, interpolate_cubic};
use crate::mass_pde::SolveReport;
use crate::model::{MassField, ModelParams};

/// Start of the ODE integration; the series covers `[0, y0]`.
pub const DEFAULT_Y0: f64 = 1e-3;
/// Matching radius for the far-field functional.
pub const DEFAULT_Y_MAX: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarProfile {
    params: ModelParams,
    y: Vec<f64>,
    m: Vec<f64>,
    u: Vec<f64>,
    a: f64,
}

impl SelfSimilarProfile {
    pub fn new(params: ModelParams, y: Vec<f64>, m: Vec<f64>, u: Vec<f64>, a: f64) -> Result<Self> {
        if y.len() != m.len() || y.len() != u.len() || y.len() < 4 {
            return Err(Error::Mismatch(format!(
                "profile needs at least 4 nodes with matching values (got {}, {}, {})",
                y.len(),
                m.len(),
                u.len()
            )));
        }
        if !(y[0] >= 0.0) || y.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "profile nodes must be nonnegative and increasing".into(),
            ));
        }
        Ok(Self { params, y, m, u, a })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn y_nodes(&self) -> &[f64] {
        &self.y
    }

    pub fn m_values(&self) -> &[f64] {
        &self.m
    }

    pub fn u_values(&self) -> &[f64] {
        &self.u
    }

    /// The shooting value `U(0⁺)`.
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn y_max(&self) -> f64 {
        self.y[self.y.len() - 1]
    }

    /// `𝓜(y)/(2σ_d y^{d−2})` at every node (0 at the origin).
    pub fn normalized(&self) -> Vec<f64> {
        self.y
            .iter()
            .zip(&self.m)
            .map(|(&y, &m)| self.params.normalize(y, m))
            .collect()
    }

    /// Largest excess of the normalized profile over `ε`, or of `−𝓜`
    /// below zero.
    pub fn bound_violation(&self) -> f64 {
        let eps = self.params.epsilon();
        self.normalized()
            .iter()
            .skip(1)
            .fold(0.0, |acc, &q| acc.max(q - eps).max(-q))
    }

    pub fn monotonicity_violation(&self) -> f64 {
        (0..self.m.len() - 1).fold(0.0, |acc, i| {
            acc.max(
                self.params
                    .normalize(self.y[i + 1], self.m[i] - self.m[i + 1]),
            )
        })
    }

    /// Largest normalized gap between `𝓜` and `σ_d ∫ U s^{d−1} ds`.
    pub fn mass_consistency(&self) -> f64 {
        let d = self.params.d() as i32;
        let sigma = self.params.sigma_d();
        let integrand: Vec<f64> = self
            .y
            .iter()
            .zip(&self.u)
            .map(|(&y, &u)| sigma * u * y.powi(d - 1))
            .collect();
        let integral = cumulative_integral(&self.y, &integrand);
        (1..self.y.len()).fold(0.0, |acc, i| {
            let gap = self.m[i] - self.m[0] - integral[i];
            acc.max(self.params.normalize(self.y[i], gap.abs()))
        })
    }

    /// `𝓜(y)` by cubic interpolation.
    pub fn mass_at(&self, y: f64) -> f64 {
        interpolate_cubic(&self.y, &self.m, y)
    }

    /// `U(y)` by cubic interpolation.
    pub fn density_at(&self, y: f64) -> f64 {
        interpolate_cubic(&self.y, &self.u, y)
    }

    /// `M*(t, r) = t^{d/2−1} 𝓜(r/√t)`.
    pub fn rescaled_mass(&self, t: f64, r: f64) -> f64 {
        t.powf(0.5 * self.params.dim() - 1.0) * self.mass_at(r / t.sqrt())
    }

    /// `sup_y |𝓜(y) − 𝓜_other(y)|/(1 + y^{d−2})` over this profile's nodes
    /// inside the range of both.
    pub fn weighted_distance(&self, other: &SelfSimilarProfile) -> f64 {
        let d = self.params.d() as i32;
        let y_top = self.y_max().min(other.y_max());
        self.y
            .iter()
            .zip(&self.m)
            .filter(|(&y, _)| y <= y_top)
            .map(|(&y, &m)| (m - other.mass_at(y)).abs() / (1.0 + y.powi(d - 2)))
            .fold(0.0, f64::max)
    }
}

/// Tunables of the shooting integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingOptions {
    pub y0: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Uniform output intervals on `(0, y_max]`.
    pub nodes: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            y0: DEFAULT_Y0,
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            nodes: 4000,
        }
    }
}

impl ShootingOptions {
    fn validate(&self) -> Result<()> {
        if !(self.y0 > 0.0 && self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.nodes >= 4) {
            return Err(Error::InvalidParameter(
                "shooting needs y0, tolerances > 0 and at least 4 nodes".into(),
            ));
        }
        Ok(())
    }

    /// `0`, then nodes growing by 3% from `y0` until their spacing
    /// reaches `h = y_max/nodes`, then multiples of `h` up to `y_max`.
    pub fn output_nodes(&self, y_max: f64) -> Vec<f64> {
        const GROWTH: f64 = 0.03;
        let h = y_max / self.nodes as f64;
        let mut out = vec![0.0];
        let mut y = self.y0;
        while y * GROWTH < h && y < y_max {
            out.push(y);
            y *= 1.0 + GROWTH;
        }
        let last = out[out.len() - 1];
        let start = (last / h).floor() as usize + 1;
        out.extend(
            (start..=self.nodes).map(|k| if k == self.nodes { y_max } else { k as f64 * h }),
        );
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OdeStats {
    pub steps: usize,
    pub rejected: usize,
}

/// A shooting run: the profile and the far-field functional at its last
/// node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub profile: SelfSimilarProfile,
    /// Limit of `𝓜/(2σ_d y^{d−2})` as `y → ∞`, from the value at `y_max`
    /// corrected by the algebraic far-field expansion.
    pub phi: f64,
    /// `𝓜(y_max)/(2σ_d y_max^{d−2})` itself.
    pub phi_raw: f64,
    pub stats: OdeStats,
}

/// Integrate the profile ODE with `U(0⁺) = a` up to `y_max`.
pub fn shoot_profile(params: &ModelParams, a: f64, y_max: f64) -> Result<Shot> {
    shoot_profile_with(params, a, y_max, &ShootingOptions::default())
}

pub fn shoot_profile_with(
    params: &ModelParams,
    a: f64,
    y_max: f64,
    opts: &ShootingOptions,
) -> Result<Shot> {
    if !(y_max > 0.0 && y_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "y_max must be positive, got {y_max}"
        )));
    }
    opts.validate()?;
    shoot_profile_at(params, a, &opts.output_nodes(y_max), opts)
}

/// Shooting with output on the given nodes (nonnegative, increasing).
pub fn shoot_profile_at(
    params: &ModelParams,
    a: f64,
    nodes: &[f64],
    opts: &ShootingOptions,
) -> Result<Shot> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "shooting value must be positive, got {a}"
        )));
    }
    opts.validate()?;
    let (w, u, stats) = integrate_profile(params, a, nodes, opts)?;
    let d = params.d() as i32;
    let sigma = params.sigma_d();
    let m: Vec<f64> = nodes
        .iter()
        .zip(&w)
        .map(|(&y, &w)| sigma * w * y.powi(d))
        .collect();
    let y_end = nodes[nodes.len() - 1];
    let phi_raw = 0.5 * y_end * y_end * w[w.len() - 1];
    let phi = far_field_limit(params.dim(), phi_raw, y_end);
    let profile = SelfSimilarProfile::new(*params, nodes.to_vec(), m, u, a)?;
    Ok(Shot {
        profile,
        phi,
        phi_raw,
        stats,
    })
}

/// Far-field functional only (one output node).
fn phi_of(params: &ModelParams, a: f64, y_max: f64, opts: &ShootingOptions) -> Result<f64> {
    let (w, _, _) = integrate_profile(params, a, &[y_max], opts)?;
    Ok(far_field_limit(
        params.dim(),
        0.5 * y_max * y_max * w[0],
        y_max,
    ))
}

/// Coefficients of `W = 𝓜/(σ_d y^d) = Σ w_k y^{2k}`, `U = Σ u_k y^{2k}`.
fn series_coefficients(d: f64, a: f64, order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut w = vec![a / d];
    let mut u = vec![a];
    for k in 1..=order {
        let conv: f64 = (0..k).map(|j| w[j] * u[k - 1 - j]).sum();
        let uk = (0.5 * (d - 2.0) * w[k - 1] - 0.5 * u[k - 1] - conv) / (2.0 * k as f64);
        u.push(uk);
        w.push(uk / (d + 2.0 * k as f64));
    }
    (w, u)
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

const SERIES_ORDER: usize = 8;

/// Integrate `(W, U)` and report them on `nodes`.
fn integrate_profile(
    params: &ModelParams,
    a: f64,
    nodes: &[f64],
    opts: &ShootingOptions,
) -> Result<(Vec<f64>, Vec<f64>, OdeStats)> {
    if nodes.is_empty() || !(nodes[0] >= 0.0) || nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(
            "output nodes must be nonnegative and increasing".into(),
        ));
    }
    let d = params.dim();
    let (sw, su) = series_coefficients(d, a, SERIES_ORDER);
    let series = |y: f64| [horner(&sw, y * y), horner(&su, y * y)];
    let mut w = Vec::with_capacity(nodes.len());
    let mut u = Vec::with_capacity(nodes.len());
    let split = nodes.partition_point(|&y| y <= opts.y0);
    for &y in &nodes[..split] {
        let s = series(y);
        w.push(s[0]);
        u.push(s[1]);
    }
    let rhs = |y: f64, s: &[f64; 2]| -> [f64; 2] {
        let (w, u) = (s[0], s[1]);
        [(u - d * w) / y, y * (0.5 * (d - 2.0) * w - (0.5 + w) * u)]
    };
    let stats = dormand_prince(rhs, opts.y0, series(opts.y0), &nodes[split..], opts, |s| {
        w.push(s[0]);
        u.push(s[1]);
    })?;
    Ok((w, u, stats))
}

/// Adaptive Dormand–Prince 5(4), stepping exactly onto each output point.
fn dormand_prince<const N: usize>(
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
    mut x: f64,
    mut y: [f64; N],
    outputs: &[f64],
    opts: &ShootingOptions,
    mut emit: impl FnMut(&[f64; N]),
) -> Result<OdeStats> {
    const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    // fifth-order weights minus embedded fourth-order weights
    const E: [f64; 7] = [
        35.0 / 384.0 - 5179.0 / 57600.0,
        0.0,
        500.0 / 1113.0 - 7571.0 / 16695.0,
        125.0 / 192.0 - 393.0 / 640.0,
        -2187.0 / 6784.0 + 92097.0 / 339200.0,
        11.0 / 84.0 - 187.0 / 2100.0,
        -1.0 / 40.0,
    ];
    const MAX_STEPS: usize = 2_000_000;

    let mut stats = OdeStats::default();
    let mut h = 1e-2 * x.max(1e-6);
    let mut k = [[0.0; N]; 7];
    k[0] = f(x, &y);
    for &target in outputs {
        while x < target {
            if stats.steps + stats.rejected > MAX_STEPS {
                return Err(Error::OdeFailure {
                    y: x,
                    reason: "step budget exhausted".into(),
                });
            }
            let last = x + h >= target;
            let step = if last { target - x } else { h };
            for s in 1..7 {
                let mut tmp = y;
                for (i, v) in tmp.iter_mut().enumerate() {
                    *v += step * (0..s).map(|j| A[s - 1][j] * k[j][i]).sum::<f64>();
                }
                k[s] = f(x + C[s - 1] * step, &tmp);
            }
            // k[6] was evaluated at the fifth-order solution (FSAL)
            let mut y_new = y;
            for (i, v) in y_new.iter_mut().enumerate() {
                *v += step * (0..6).map(|j| A[5][j] * k[j][i]).sum::<f64>();
            }
            let mut err = 0.0;
            for i in 0..N {
                let e = step * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
                let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
                err += (e / scale).powi(2);
            }
            let err = (err / N as f64).sqrt();
            if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                return Err(Error::OdeFailure {
                    y: x,
                    reason: "solution left the representable range".into(),
                });
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                x = if last { target } else { x + step };
                y = y_new;
                k[0] = k[6];
                stats.steps += 1;
                if !last || factor < 1.0 {
                    h = step * factor;
                }
            } else {
                stats.rejected += 1;
                h = step * factor;
                if h < 1e-14 * x.abs().max(1e-300) {
                    return Err(Error::OdeFailure {
                        y: x,
                        reason: format!("step size underflow (h = {h:e})"),
                    });
                }
            }
        }
        emit(&y);
    }
    Ok(stats)
}

/// Coefficients `q_k` of the far-field expansion
/// `𝓜/(2σ_d y^{d−2}) ~ Σ q_k y^{−2k}` with leading value `q0`.
pub fn far_field_coefficients(d: f64, q0: f64, terms: usize) -> Vec<f64> {
    let mut q = vec![q0];
    for m in 0..terms.saturating_sub(1) {
        let mf = m as f64;
        let conv: f64 = (0..=m)
            .map(|l| q[m - l] * q[l] * (d - 2.0 - 2.0 * l as f64))
            .sum();
        q.push((q[m] * (d - 2.0 - 2.0 * mf) * (-2.0 - 2.0 * mf) + 2.0 * conv) / (mf + 1.0));
    }
    q
}

/// The asymptotic sum, truncated at its smallest term.
fn far_field_sum(d: f64, q0: f64, y: f64) -> f64 {
    let x = 1.0 / (y * y);
    let q = far_field_coefficients(d, q0, 16);
    let mut sum = q[0];
    let mut prev = f64::INFINITY;
    let mut pw = 1.0;
    for &c in &q[1..] {
        pw *= x;
        let term = c * pw;
        if term.abs() >= prev {
            break;
        }
        sum += term;
        prev = term.abs();
    }
    sum
}

/// The `q0` whose far-field expansion takes the value `raw` at `y`.
fn far_field_limit(d: f64, raw: f64, y: f64) -> f64 {
    let mut q0 = raw;
    for _ in 0..200 {
        let next = q0 + (raw - far_field_sum(d, q0, y));
        if (next - q0).abs() <= 1e-16 * q0.abs().max(1e-300) {
            return next;
        }
        q0 = next;
    }
    q0
}

/// One evaluation of the far-field functional during matching; `phi` is
/// `None` when the integration failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiSample {
    pub epsilon: f64,
    pub a: f64,
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedProfile {
    pub shot: Shot,
    pub a_star: f64,
    /// Final bisection bracket, `Φ − ε` changes sign across it.
    pub bracket: (f64, f64),
    pub trace: Vec<PhiSample>,
    /// True when the direct bracket failed and continuation in `ε` was used.
    pub continuation: bool,
}

/// Find `a*` with `Φ(a*) = ε` and return the profile shot from it.
pub fn match_profile(params: &ModelParams, y_max: f64, tol: f64) -> Result<MatchedProfile> {
    match_profile_with(params, y_max, tol, &ShootingOptions::default())
}

pub fn match_profile_with(
    params: &ModelParams,
    y_max: f64,
    tol: f64,
    opts: &ShootingOptions,
) -> Result<MatchedProfile> {
    let eps = params.epsilon();
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "profile matching needs 0 < ε < 1, got {eps}"
        )));
    }
    if !(tol > 0.0) || !(y_max > 0.0) {
        return Err(Error::InvalidParameter(
            "tol and y_max must be positive".into(),
        ));
    }
    opts.validate()?;
    let mut trace = Vec::new();
    let (a_star, bracket, continuation) = match bracket_upward(params, y_max, opts, &mut trace) {
        Some(br) => {
            let (a, br) = bisect(params, y_max, tol, opts, br, &mut trace)?;
            (a, br, false)
        }
        None => {
            let (a, br) = continuation(params, y_max, tol, opts, &mut trace)?;
            (a, br, true)
        }
    };
    let shot = shoot_profile_with(params, a_star, y_max, opts)?;
    Ok(MatchedProfile {
        shot,
        a_star,
        bracket,
        trace,
        continuation,
    })
}

fn sample(
    params: &ModelParams,
    a: f64,
    y_max: f64,
    opts: &ShootingOptions,
    trace: &mut Vec<PhiSample>,
) -> Option<f64> {
    let phi = phi_of(params, a, y_max, opts).ok();
    trace.push(PhiSample {
        epsilon: params.epsilon(),
        a,
        phi,
    });
    phi
}

/// `[ε, a_hi]` with `a_hi` doubled until `Φ ≥ ε`. `None` when `Φ(ε) > ε`,
/// when `Φ` decreases along the way, or when no bracket appears.
fn bracket_upward(
    params: &ModelParams,
    y_max: f64,
    opts: &ShootingOptions,
    trace: &mut Vec<PhiSample>,
) -> Option<(f64, f64)> {
    let eps = params.epsilon();
    let mut lo = eps;
    let mut phi_lo = sample(params, lo, y_max, opts, trace)?;
    if phi_lo > eps {
        return None;
    }
    for _ in 0..60 {
        let hi = 2.0 * lo;
        match sample(params, hi, y_max, opts, trace) {
            // a failed integration is taken as overshoot
            None => return Some((lo, hi)),
            Some(phi) if phi < phi_lo => return None,
            Some(phi) if phi >= eps => return Some((lo, hi)),
            Some(phi) => {
                lo = hi;
                phi_lo = phi;
            }
        }
    }
    None
}

/// Bisection on a bracket with `Φ(lo) ≤ ε ≤ Φ(hi)`.
fn bisect(
    params: &ModelParams,
    y_max: f64,
    tol: f64,
    opts: &ShootingOptions,
    (mut lo, mut hi): (f64, f64),
    trace: &mut Vec<PhiSample>,
) -> Result<(f64, (f64, f64))> {
    let eps = params.epsilon();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match sample(params, mid, y_max, opts, trace) {
            Some(phi) if (phi - eps).abs() <= tol => return Ok((mid, (lo, hi))),
            Some(phi) if phi < eps => lo = mid,
            _ => hi = mid,
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Err(Error::NoBracket(format!(
        "bisection stalled on [{lo}, {hi}] without reaching |Φ − ε| ≤ {tol}"
    )))
}

/// Warm-started solves for `ε = 0.05, 0.10, …` up to the target.
fn continuation(
    params: &ModelParams,
    y_max: f64,
    tol: f64,
    opts: &ShootingOptions,
    trace: &mut Vec<PhiSample>,
) -> Result<(f64, (f64, f64))> {
    let target = params.epsilon();
    let mut levels: Vec<f64> = (1..)
        .map(|k| 0.05 * k as f64)
        .take_while(|&e| e < target)
        .collect();
    levels.push(target);
    let mut guess = levels[0];
    let mut result = None;
    for (j, &eps) in levels.iter().enumerate() {
        if j > 0 {
            guess *= eps / levels[j - 1];
        }
        let p = params.with_epsilon(eps)?;
        let below = |a: f64, trace: &mut Vec<PhiSample>| {
            sample(&p, a, y_max, opts, trace).map(|phi| phi < eps)
        };
        let (mut lo, mut hi) = (guess, guess);
        let mut found = false;
        for _ in 0..40 {
            lo /= 1.25;
            hi *= 1.25;
            if below(lo, trace) == Some(true) && below(hi, trace) != Some(true) {
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::NoBracket(format!(
                "continuation lost the root at ε = {eps}; Φ trace: {}",
                format_trace(trace)
            )));
        }
        let (a, br) = bisect(&p, y_max, tol, opts, (lo, hi), trace)?;
        guess = a;
        result = Some((a, br));
    }
    result.ok_or_else(|| Error::NoBracket("empty continuation path".into()))
}

fn format_trace(trace: &[PhiSample]) -> String {
    trace
        .iter()
        .map(|s| match s.phi {
            Some(phi) => format!("(ε={}, a={:.6e}, Φ={:.6e})", s.epsilon, s.a, phi),
            None => format!("(ε={}, a={:.6e}, failed)", s.epsilon, s.a),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// `𝓜(y) = t^{1−d/2} M(t, √t y)` and `U(y) = t·u(t, √t y)` on the grid
/// nodes of the snapshot at `t_extract` with `y ≤ y_max`.
pub fn extract_profile(
    report: &SolveReport,
    t_extract: f64,
    y_max: f64,
) -> Result<SelfSimilarProfile> {
    extract_from_field(report.snapshot_at(t_extract)?, y_max)
}

pub fn extract_from_field(field: &MassField, y_max: f64) -> Result<SelfSimilarProfile> {
    let t = field.t();
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(
            "extraction needs a snapshot at t > 0".into(),
        ));
    }
    let root = t.sqrt();
    let r_top = root * y_max;
    if r_top > field.grid().r_max() * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "extraction range y ≤ {y_max} needs r ≤ {r_top}, beyond the grid (r_max = {})",
            field.grid().r_max()
        )));
    }
    let params = *field.params();
    let scale = t.powf(1.0 - 0.5 * params.dim());
    let u = field.density();
    let n = field
        .nodes()
        .partition_point(|&r| r <= r_top * (1.0 + 1e-12));
    let y: Vec<f64> = field.nodes()[..n].iter().map(|&r| r / root).collect();
    let m: Vec<f64> = field.values()[..n].iter().map(|&v| scale * v).collect();
    let uu: Vec<f64> = u[..n].iter().map(|&v| t * v).collect();
    let a = uu[0];
    SelfSimilarProfile::new(params, y, m, uu, a)
}

/// `f(y) = exp(y²/4 − ∫_y^{y*} 𝓜(s)/(σ_d s^{d−1}) ds)` on the profile nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratingFactor {
    y_star: f64,
    /// `G(y) = ∫_0^y 𝓜(s)/(σ_d s^{d−1}) ds` on the nodes.
    g: Vec<f64>,
    g_star: f64,
    log_values: Vec<f64>,
}

impl IntegratingFactor {
    pub fn y_star(&self) -> f64 {
        self.y_star
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|v| v.exp()).collect()
    }

    /// `f(0)`.
    pub fn at_origin(&self) -> f64 {
        (-self.g_star).exp()
    }

    /// `f(y*) = e^{y*²/4}`.
    pub fn at_anchor(&self) -> f64 {
        (0.25 * self.y_star * self.y_star).exp()
    }

    pub fn cumulative_drift(&self) -> &[f64] {
        &self.g
    }
}

pub fn integrating_factor(profile: &SelfSimilarProfile, y_star: f64) -> Result<IntegratingFactor> {
    let y = profile.y_nodes();
    if y[0] != 0.0 {
        return Err(Error::InvalidParameter(
            "the profile must include the origin".into(),
        ));
    }
    if !(y_star > 0.0 && y_star <= profile.y_max()) {
        return Err(Error::InvalidParameter(format!(
            "anchor y* = {y_star} outside (0, {}]",
            profile.y_max()
        )));
    }
    // 𝓜/(σ_d s^{d−1}) must vanish at the origin for f(0) to be finite
    if profile.normalized()[1] > 1e-2 {
        return Err(Error::Divergent(
            "𝓜(s)/s^{d−1} is not integrable at the origin (profile above its subcritical bound near 0)".into(),
        ));
    }
    let g = drift_integral(profile);
    let g_star = interpolate_cubic(y, &g, y_star);
    let log_values = y
        .iter()
        .zip(&g)
        .map(|(&v, &gv)| 0.25 * v * v - (g_star - gv))
        .collect();
    Ok(IntegratingFactor {
        y_star,
        g,
        g_star,
        log_values,
    })
}

fn drift_integral(profile: &SelfSimilarProfile) -> Vec<f64> {
    let d = profile.params.d() as i32;
    let sigma = profile.params.sigma_d();
    let integrand: Vec<f64> = profile
        .y
        .iter()
        .zip(&profile.m)
        .map(|(&y, &m)| {
            if y > 0.0 {
                m / (sigma * y.powi(d - 1))
            } else {
                0.0
            }
        })
        .collect();
    cumulative_integral(&profile.y, &integrand)
}

/// `H(y) = ∫_0^y s e^{s²/4 + G(s)} ds = ∫_0^y s f(s) ds / f(0)`.
fn weighted_factor_integral(y: &[f64], g: &[f64]) -> Vec<f64> {
    let integrand: Vec<f64> = y
        .iter()
        .zip(g)
        .map(|(&s, &gv)| s * (0.25 * s * s + gv).exp())
        .collect();
    cumulative_integral(y, &integrand)
}

/// Limit diagnostics of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileLimits {
    /// `U` at the two smallest positive nodes, extrapolated in `y²`.
    pub u0_direct: f64,
    /// `d·𝓜(y)/(σ_d y^d)` at the three smallest positive nodes,
    /// extrapolated in `y²`.
    pub u0_extrapolated: f64,
    /// Right side of the integrated `(Uf)′` identity at `y = 0`, anchor `y*`.
    pub u0_explicit: f64,
    /// Largest pairwise gap of the three estimates.
    pub estimator_spread: f64,
    pub y_star: f64,
    pub y_star_alt: f64,
    /// The explicit-form value with the second anchor.
    pub u0_explicit_alt: f64,
    pub anchor_spread: f64,
    /// `∫_{y*}^{y} s f ds / (2 f(y))` at the last node.
    pub tail_ratio: f64,
    pub tail_y: f64,
    pub u_at_y_max: f64,
    pub u_max: f64,
    /// `max(a, d − 2)`.
    pub u_cap: f64,
}

pub fn profile_limits(
    profile: &SelfSimilarProfile,
    factor: &IntegratingFactor,
) -> Result<ProfileLimits> {
    let y = profile.y_nodes();
    let u = profile.u_values();
    let m = profile.m_values();
    if factor.g.len() != y.len() {
        return Err(Error::Mismatch(
            "factor and profile use different nodes".into(),
        ));
    }
    let p = &profile.params;
    let d = p.dim();
    let first = y.partition_point(|&v| v <= 0.0);
    if y.len() < first + 3 || y[first + 2] > 0.25 {
        return Err(Error::InvalidParameter(
            "insufficient resolution near the origin: need three nodes below y = 0.25".into(),
        ));
    }
    let (i1, i2, i3) = (first, first + 1, first + 2);
    let sq = |i: usize| y[i] * y[i];
    let u0_direct = (u[i1] * sq(i2) - u[i2] * sq(i1)) / (sq(i2) - sq(i1));
    let q = |i: usize| d * m[i] / (p.sigma_d() * y[i].powi(p.d() as i32));
    let u0_extrapolated = {
        // quadratic in x = y² through three points, evaluated at x = 0
        let (x1, x2, x3) = (sq(i1), sq(i2), sq(i3));
        q(i1) * x2 * x3 / ((x1 - x2) * (x1 - x3))
            + q(i2) * x1 * x3 / ((x2 - x1) * (x2 - x3))
            + q(i3) * x1 * x2 / ((x3 - x1) * (x3 - x2))
    };
    let h = weighted_factor_integral(y, &factor.g);
    let explicit = |y_star: f64| {
        let c = 0.5 * (d - 2.0);
        let g_star = interpolate_cubic(y, &factor.g, y_star);
        let h_star = interpolate_cubic(y, &h, y_star);
        let u_star = interpolate_cubic(y, u, y_star);
        c + (0.25 * y_star * y_star + g_star).exp() * (u_star - c) + 0.25 * (d - 2.0) * h_star
    };
    let y_star = factor.y_star;
    let y_star_alt = if 2.0 * y_star <= 0.5 * profile.y_max() {
        2.0 * y_star
    } else {
        0.5 * y_star
    };
    let u0_explicit = explicit(y_star);
    let u0_explicit_alt = explicit(y_star_alt);
    let est = [u0_direct, u0_extrapolated, u0_explicit];
    let estimator_spread =
        est.iter().fold(f64::MIN, |a, &b| a.max(b)) - est.iter().fold(f64::MAX, |a, &b| a.min(b));

    let last = y.len() - 1;
    let tail_y = y[last];
    let h_star = interpolate_cubic(y, &h, y_star);
    let tail_ratio = 0.5 * (h[last] - h_star) * (-(0.25 * tail_y * tail_y) - factor.g[last]).exp();
    if !tail_ratio.is_finite() {
        return Err(Error::Overflow(format!("tail integral at y = {tail_y}")));
    }
    let u_max = u[first..].iter().cloned().fold(f64::MIN, f64::max);
    Ok(ProfileLimits {
        u0_direct,
        u0_extrapolated,
        u0_explicit,
        estimator_spread,
        y_star,
        y_star_alt,
        u0_explicit_alt,
        anchor_spread: (u0_explicit - u0_explicit_alt).abs(),
        tail_ratio,
        tail_y,
        u_at_y_max: u[last],
        u_max,
        u_cap: profile.a.max(d - 2.0),
    })
}

/// Normalized residual of the second-order profile equation at every node,
/// from five-point finite differences of `𝓜` alone (0 at the two nodes
/// nearest each end).
pub fn ode_residual(profile: &SelfSimilarProfile) -> Vec<f64> {
    let y = profile.y_nodes();
    let m = profile.m_values();
    let p = &profile.params;
    let d = p.dim();
    let n = y.len();
    let mut out = vec![0.0; n];
    if n < 5 {
        return out;
    }
    for i in 2..n - 2 {
        if y[i] <= 0.0 {
            continue;
        }
        let w = fornberg(y[i], &y[i - 2..=i + 2]);
        let m1: f64 = (0..5).map(|j| w[1][j] * m[i - 2 + j]).sum();
        let m2: f64 = (0..5).map(|j| w[2][j] * m[i - 2 + j]).sum();
        let terms = [
            m2,
            0.5 * y[i] * m1,
            -0.5 * (d - 2.0) * m[i],
            -(d - 1.0) / y[i] * m1,
            m[i] * m1 / (p.sigma_d() * y[i].powi(p.d() as i32 - 1)),
        ];
        let scale: f64 = terms.iter().map(|t| t.abs()).sum();
        if scale > 0.0 {
            out[i] = terms.iter().sum::<f64>().abs() / scale;
        }
    }
    out
}

/// Finite-difference weights for derivatives 0..=2 at `x0` on arbitrary
/// nodes (Fornberg's recursion).
fn fornberg(x0: f64, x: &[f64]) -> [Vec<f64>; 3] {
    let n = x.len();
    let mut c = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut c1 = 1.0;
    let mut c4 = x[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(2);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - x0;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// One row of a profile export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub y: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "U")]
    pub u: f64,
    pub f: f64,
    pub residual: f64,
}

pub fn profile_rows(profile: &SelfSimilarProfile, factor: &IntegratingFactor) -> Vec<ProfileRow> {
    let res = ode_residual(profile);
    (0..profile.y.len())
        .map(|i| ProfileRow {
            y: profile.y[i],
            m: profile.m[i],
            u: profile.u[i],
            f: factor.log_values[i].exp(),
            residual: res[i],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_satisfies_the_system() {
        let d = 3.0;
        let (w, u) = series_coefficients(d, 0.7, SERIES_ORDER);
        let y: f64 = 0.05;
        let (wy, uy) = (horner(&w, y * y), horner(&u, y * y));
        // derivatives of the series term by term
        let dw: f64 = (1..w.len())
            .map(|k| 2.0 * k as f64 * w[k] * y.powi(2 * k as i32 - 1))
            .sum();
        let du: f64 = (1..u.len())
            .map(|k| 2.0 * k as f64 * u[k] * y.powi(2 * k as i32 - 1))
            .sum();
        assert!((dw - (uy - d * wy) / y).abs() < 1e-14);
        assert!((du - y * (0.5 * (d - 2.0) * wy - (0.5 + wy) * uy)).abs() < 1e-14);
    }

    #[test]
    fn far_field_leading_correction() {
        let q = far_field_coefficients(3.0, 0.5, 3);
        assert!((q[1] - 2.0 * 0.5 * (0.5 - 1.0)).abs() < 1e-15);
        // the singular stationary profile has no corrections
        assert!(far_field_coefficients(5.0, 1.0, 6)[1..]
            .iter()
            .all(|c| c.abs() < 1e-14));
        assert!((far_field_limit(3.0, far_field_sum(3.0, 0.3, 20.0), 20.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn fornberg_reproduces_quadratics() {
        let x = [0.0, 0.1, 0.25, 0.3, 0.6];
        let w = fornberg(0.25, &x);
        let f = |t: f64| 1.0 + 2.0 * t + 3.0 * t * t;
        let d1: f64 = (0..5).map(|j| w[1][j] * f(x[j])).sum();
        let d2: f64 = (0..5).map(|j| w[2][j] * f(x[j])).sum();
        assert!((d1 - 3.5).abs() < 1e-12 && (d2 - 6.0).abs() < 1e-10);
    }

    #[test]
    fn exponential_decay_is_integrated_accurately() {
        let opts = ShootingOptions::default();
        let mut out = Vec::new();
        dormand_prince(
            |_, y: &[f64; 1]| [-y[0]],
            0.0,
            [1.0],
            &[1.0, 3.0],
            &opts,
            |s| out.push(s[0]),
        )
        .unwrap();
        assert!((out[0] - (-1f64).exp()).abs() < 1e-12);
        assert!((out[1] - (-3f64).exp()).abs() < 1e-12);
    }
}
