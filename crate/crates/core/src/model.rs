//! Problem parameters, the Chandrasekhar reference field, truncated initial
//! data and the radial mass field shared by the solvers.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{MonotoneCubic, RadialGrid};
use crate::specfun;

/// Measure of the unit sphere in ℝ^d, `2π^{d/2}/Γ(d/2)`.
pub fn sphere_measure(d: u32) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidParameter(
            "dimension must be at least 1".into(),
        ));
    }
    let half = 0.5 * d as f64;
    if d <= 150 {
        Ok(2.0 * PI.powf(half) / specfun::gamma_fn(half)?)
    } else {
        Ok((2f64.ln() + half * PI.ln() - specfun::ln_gamma(half)?).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `ε < 1`: the self-similar construction applies.
    Subcritical,
    /// `ε = 1`: exploratory only.
    Critical,
    /// `ε > 1`: blow-up experiments.
    Supercritical,
}

/// Dimension `d ≥ 3` and subcriticality `ε` of the initial datum
/// `ε·2(d−2)/|x|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    d: u32,
    epsilon: f64,
    sigma_d: f64,
}

impl ModelParams {
    /// Parameters with `0 < ε ≤ 1`.
    pub fn new(d: u32, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1], got {epsilon}; use ModelParams::experimental for ε > 1"
            )));
        }
        Self::experimental(d, epsilon)
    }

    /// Like [`ModelParams::new`] but admits any `ε > 0`, for supercritical
    /// experiments. No existence guarantee applies when `ε ≥ 1`.
    pub fn experimental(d: u32, epsilon: f64) -> Result<Self> {
        if d < 3 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be at least 3, got {d}"
            )));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            d,
            epsilon,
            sigma_d: sphere_measure(d)?,
        })
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn dim(&self) -> f64 {
        self.d as f64
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sigma_d(&self) -> f64 {
        self.sigma_d
    }

    pub fn regime(&self) -> Regime {
        if self.epsilon < 1.0 {
            Regime::Subcritical
        } else if self.epsilon == 1.0 {
            Regime::Critical
        } else {
            Regime::Supercritical
        }
    }

    pub fn is_critical(&self) -> bool {
        self.regime() == Regime::Critical
    }

    /// Same dimension, different `ε` (range rules of `experimental`).
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::experimental(self.d, epsilon)
    }

    /// `ε·2σ_d·r^{d−2}`, the mass of the homogeneous datum and the a-priori
    /// upper bound for every subcritical solution.
    pub fn subcritical_bound(&self, r: f64) -> f64 {
        self.epsilon * chandrasekhar_mass(self, r)
    }

    /// `M / (2σ_d r^{d−2})`; zero at the origin.
    pub fn normalize(&self, r: f64, m: f64) -> f64 {
        if r > 0.0 {
            m / chandrasekhar_mass(self, r)
        } else {
            0.0
        }
    }
}

/// Mass of the singular stationary solution inside radius `r`,
/// `2σ_d r^{d−2}`. Independent of `ε`.
pub fn chandrasekhar_mass(params: &ModelParams, r: f64) -> f64 {
    2.0 * params.sigma_d * r.powi(params.d as i32 - 2)
}

/// Truncation level `K` and the radius `R(K)` where the plateau density
/// meets `ε·2(d−2)/r²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    k: f64,
    r_k: f64,
}

impl TruncationSpec {
    pub fn new(params: &ModelParams, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "truncation level must be positive, got {k}"
            )));
        }
        let d = params.dim();
        let r_k = (2.0 * (d - 2.0) * params.sigma_d / d).sqrt() / k;
        Ok(Self { k, r_k })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn r_k(&self) -> f64 {
        self.r_k
    }

    /// The deficit `ε(4σ_d/d)R(K)^{d−2}` of the outer branch relative to
    /// the homogeneous datum.
    pub fn mass_deficit(&self, params: &ModelParams) -> f64 {
        let d = params.dim();
        params.epsilon * 4.0 * params.sigma_d / d * self.r_k.powi(params.d as i32 - 2)
    }
}

/// Mass inside radius `r` of the truncated datum.
pub fn truncated_initial_mass(params: &ModelParams, trunc: &TruncationSpec, r: f64) -> f64 {
    let r = r.max(0.0);
    if r <= trunc.r_k {
        params.epsilon * trunc.k * trunc.k * r.powi(params.d as i32)
    } else {
        params.subcritical_bound(r) - trunc.mass_deficit(params)
    }
}

/// Density of the truncated datum: the plateau `εK²d/σ_d` inside `R(K)`,
/// `ε·2(d−2)/r²` outside.
pub fn truncated_initial_density(params: &ModelParams, trunc: &TruncationSpec, r: f64) -> f64 {
    let d = params.dim();
    if r <= trunc.r_k {
        params.epsilon * trunc.k * trunc.k * d / params.sigma_d
    } else {
        params.epsilon * 2.0 * (d - 2.0) / (r * r)
    }
}

/// Samples of `M(t, ·)` on a radial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MassField {
    params: ModelParams,
    grid: Arc<RadialGrid>,
    t: f64,
    values: Vec<f64>,
}

impl MassField {
    pub fn new(
        params: ModelParams,
        grid: Arc<RadialGrid>,
        t: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Mismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time must be nonnegative, got {t}"
            )));
        }
        Ok(Self {
            params,
            grid,
            t,
            values,
        })
    }

    pub fn from_fn(
        params: ModelParams,
        grid: Arc<RadialGrid>,
        t: f64,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(params, grid, t, values)
    }

    pub fn zero(params: ModelParams, grid: Arc<RadialGrid>, t: f64) -> Self {
        let n = grid.len();
        Self {
            params,
            grid,
            t,
            values: vec![0.0; n],
        }
    }

    /// `2σ_d r^{d−2}` on the grid at `t = 0`.
    pub fn chandrasekhar(params: ModelParams, grid: Arc<RadialGrid>) -> Self {
        let values = grid
            .nodes()
            .iter()
            .map(|&r| chandrasekhar_mass(&params, r))
            .collect();
        Self {
            params,
            grid,
            t: 0.0,
            values,
        }
    }

    /// The homogeneous datum `ε·2σ_d r^{d−2}` at `t = 0`.
    pub fn homogeneous(params: ModelParams, grid: Arc<RadialGrid>) -> Self {
        let values = grid
            .nodes()
            .iter()
            .map(|&r| params.subcritical_bound(r))
            .collect();
        Self {
            params,
            grid,
            t: 0.0,
            values,
        }
    }

    pub fn truncated(params: ModelParams, trunc: &TruncationSpec, grid: Arc<RadialGrid>) -> Self {
        let values = grid
            .nodes()
            .iter()
            .map(|&r| truncated_initial_mass(&params, trunc, r))
            .collect();
        Self {
            params,
            grid,
            t: 0.0,
            values,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn with_values(&self, t: f64, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            params: self.params,
            grid: Arc::clone(&self.grid),
            t,
            values,
        }
    }

    /// `M/(2σ_d r^{d−2})` at every node (0 at the origin).
    pub fn normalized(&self) -> Vec<f64> {
        self.nodes()
            .iter()
            .zip(&self.values)
            .map(|(&r, &m)| self.params.normalize(r, m))
            .collect()
    }

    /// Largest excess of the normalized field over `ε` (0 if none).
    pub fn bound_violation(&self) -> f64 {
        let eps = self.params.epsilon;
        self.normalized()
            .iter()
            .skip(1)
            .fold(0.0, |acc, &q| acc.max(q - eps))
    }

    /// Largest drop `M_i − M_{i+1}`, normalized by `2σ_d r_{i+1}^{d−2}`
    /// (0 if the field is nondecreasing).
    pub fn monotonicity_violation(&self) -> f64 {
        let r = self.nodes();
        (0..self.values.len() - 1).fold(0.0, |acc, i| {
            let drop = self.values[i] - self.values[i + 1];
            acc.max(self.params.normalize(r[i + 1], drop))
        })
    }

    /// `|M_0|`, the defect of the boundary condition at the origin.
    pub fn origin_defect(&self) -> f64 {
        self.values[0].abs()
    }

    /// True when all three field invariants hold within `tol` (normalized).
    pub fn satisfies_invariants(&self, tol: f64) -> bool {
        self.origin_defect() <= tol
            && self.monotonicity_violation() <= tol
            && self.bound_violation() <= tol
    }

    /// Density `u = M_r/(σ_d r^{d−1})` at every node, from a three-point
    /// stencil exact on `{1, r^d, r^{d+2}}` (the behaviour of `M` near 0).
    pub fn density(&self) -> Vec<f64> {
        let m_r = mass_gradient(self.nodes(), &self.values, self.params.d);
        let sigma = self.params.sigma_d;
        let d = self.params.d as i32;
        let r = self.nodes();
        let mut u: Vec<f64> = (0..r.len())
            .map(|i| {
                if i == 0 {
                    0.0
                } else {
                    m_r[i] / (sigma * r[i].powi(d - 1))
                }
            })
            .collect();
        u[0] = density_at_origin(r, &self.values, &self.params);
        u
    }

    /// Monotone cubic interpolant of the field in `r`.
    pub fn interpolant(&self) -> Result<MonotoneCubic> {
        MonotoneCubic::new(self.nodes(), &self.values)
    }
}

/// `u(0)` from `M ≈ (σ_d u(0)/d) r^d (1 + c r²)`: linear extrapolation in
/// `r²` of `d·M/(σ_d r^d)` at the first two interior nodes.
pub fn density_at_origin(r: &[f64], m: &[f64], params: &ModelParams) -> f64 {
    let d = params.d as i32;
    let q = |i: usize| params.dim() * m[i] / (params.sigma_d * r[i].powi(d));
    let (x1, x2) = (r[1] * r[1], r[2] * r[2]);
    (q(1) * x2 - q(2) * x1) / (x2 - x1)
}

/// `∂_r M` at every node. Interior nodes use the stencil exact on
/// `{1, r^d, r^{d+2}}`; the origin gets 0 and the outer node a one-sided
/// quadratic.
pub fn mass_gradient(r: &[f64], m: &[f64], d: u32) -> Vec<f64> {
    let n = r.len();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let w = power_stencil(r[i - 1], r[i], r[i + 1], d as f64);
        out[i] = (w[0] * m[i - 1] + w[1] * m[i] + w[2] * m[i + 1]) / r[i];
    }
    let (d1, _) = crate::grid::derivatives(&r[n - 3..], &m[n - 3..]);
    out[n - 1] = d1[2];
    out
}

/// Weights `w` with `Σ w_j φ(x_j) = φ'(1)` for `φ ∈ {1, x^p, x^{p+2}}`,
/// where `x_j = r_j/r_i`. Returned in units of `1/r_i`.
pub(crate) fn power_stencil(r0: f64, r1: f64, r2: f64, p: f64) -> [f64; 3] {
    // φ(x_j) − 1 computed as expm1(k ln x_j) to avoid cancellation
    let pw = |x: f64, k: f64| {
        if x == 0.0 {
            -1.0
        } else {
            (k * x.ln()).exp_m1()
        }
    };
    let (xm, xp) = (r0 / r1, r2 / r1);
    let (a0, a2) = (pw(xm, p), pw(xp, p));
    let (b0, b2) = (pw(xm, p + 2.0), pw(xp, p + 2.0));
    let det = a0 * b2 - a2 * b0;
    let w0 = (p * b2 - a2 * (p + 2.0)) / det;
    let w2 = (a0 * (p + 2.0) - p * b0) / det;
    [w0, -w0 - w2, w2]
}

/// `max_i r_i^{2−d} M_i` over interior nodes.
pub fn radial_concentration(field: &MassField) -> f64 {
    let d = field.params.d as i32;
    field
        .nodes()
        .iter()
        .zip(field.values())
        .skip(1)
        .fold(0.0, |acc, (&r, &m)| acc.max(m * r.powi(2 - d)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn sphere_measure_low_dimensions() {
        assert!(close(sphere_measure(2).unwrap(), 2.0 * PI, 4e-15));
        assert!(close(sphere_measure(3).unwrap(), 4.0 * PI, 4e-15));
        assert!(close(sphere_measure(4).unwrap(), 2.0 * PI * PI, 4e-15));
        assert!(sphere_measure(0).is_err());
        // the large-d path agrees with the direct one where both apply
        let direct = 2.0 * PI.powf(75.0) / specfun::gamma_fn(75.0).unwrap();
        assert!(close(sphere_measure(150).unwrap(), direct, 1e-12));
        assert!(sphere_measure(400).unwrap() > 0.0);
    }

    #[test]
    fn params_validation_and_regime() {
        assert!(ModelParams::new(2, 0.5).is_err());
        assert!(ModelParams::new(3, 0.0).is_err());
        assert!(ModelParams::new(3, 1.5).is_err());
        assert_eq!(
            ModelParams::new(3, 0.5).unwrap().regime(),
            Regime::Subcritical
        );
        assert!(ModelParams::new(3, 1.0).unwrap().is_critical());
        let p = ModelParams::experimental(3, 1.9).unwrap();
        assert_eq!(p.regime(), Regime::Supercritical);
    }

    #[test]
    fn chandrasekhar_examples() {
        let p = ModelParams::new(3, 1.0).unwrap();
        assert!(close(chandrasekhar_mass(&p, 1.0), 8.0 * PI, 4e-15));
        assert!(close(chandrasekhar_mass(&p, 2.0), 16.0 * PI, 4e-15));
        for r in [0.1, 1.0, 3.7, 100.0] {
            assert!(close(chandrasekhar_mass(&p, r) / r, 8.0 * PI, 1e-14));
        }
        let p4 = ModelParams::new(4, 1.0).unwrap();
        assert_eq!(chandrasekhar_mass(&p4, 0.0), 0.0);
    }

    #[test]
    fn truncation_radius_and_branches() {
        let p = ModelParams::new(3, 0.5).unwrap();
        let t = TruncationSpec::new(&p, 1.0).unwrap();
        let expected = (2.0 * 4.0 * PI / 3.0).sqrt();
        assert!(close(t.r_k(), expected, 4e-15));
        assert_eq!(truncated_initial_mass(&p, &t, 0.0), 0.0);
        let r = t.r_k();
        let inner = p.epsilon() * r.powi(3);
        let outer = p.subcritical_bound(r) - t.mass_deficit(&p);
        assert!((inner - outer).abs() <= 1e-14 * inner);
        assert!(TruncationSpec::new(&p, 0.0).is_err());
    }

    #[test]
    fn concentration_of_reference_fields() {
        let p = ModelParams::new(3, 1.0).unwrap();
        let g = Arc::new(RadialGrid::default_geometric(10.0, 200).unwrap());
        let c = MassField::chandrasekhar(p, Arc::clone(&g));
        assert!(close(radial_concentration(&c), 2.0 * p.sigma_d(), 1e-13));
        let z = MassField::zero(p, g, 0.0);
        assert_eq!(radial_concentration(&z), 0.0);
    }

    #[test]
    fn power_stencil_is_exact_on_its_basis() {
        let (r0, r1, r2) = (0.3, 0.37, 0.5);
        for p in [1.0, 3.0, 4.5] {
            let w = power_stencil(r0, r1, r2, p);
            for k in [0.0, p, p + 2.0] {
                let f = |r: f64| r.powf(k);
                let approx = (w[0] * f(r0) + w[1] * f(r1) + w[2] * f(r2)) / r1;
                let exact = if k == 0.0 { 0.0 } else { k * r1.powf(k - 1.0) };
                assert!(
                    (approx - exact).abs() < 1e-10 * exact.abs().max(1.0),
                    "{p} {k}"
                );
            }
        }
        // first interior node next to the origin
        let w = power_stencil(0.0, 0.1, 0.2, 3.0);
        let approx = (w[1] * 0.1f64.powi(3) + w[2] * 0.2f64.powi(3)) / 0.1;
        assert!((approx - 3.0 * 0.01).abs() < 1e-14);
    }

    #[test]
    fn chandrasekhar_density_is_exact_in_the_interior() {
        let p = ModelParams::new(3, 1.0).unwrap();
        let g = Arc::new(RadialGrid::default_geometric(10.0, 400).unwrap());
        let c = MassField::chandrasekhar(p, Arc::clone(&g));
        let u = c.density();
        // the basis does not contain r^{d-2}, so accuracy needs r >> h
        for i in g.window(0.5, 9.9) {
            let r = g.nodes()[i];
            let exact = 2.0 / (r * r);
            assert!(
                (u[i] - exact).abs() < 1e-3 * exact,
                "{r}: {} vs {exact}",
                u[i]
            );
        }
    }

    #[test]
    fn invariant_checks_flag_violations() {
        let p = ModelParams::new(3, 0.5).unwrap();
        let g = Arc::new(RadialGrid::uniform(1.0, 4).unwrap());
        let ok = MassField::homogeneous(p, Arc::clone(&g));
        assert!(ok.satisfies_invariants(1e-12));
        let bad = MassField::new(p, g, 0.0, vec![0.0, 5.0, 4.0, 50.0, 60.0]).unwrap();
        assert!(bad.monotonicity_violation() > 0.0);
        assert!(bad.bound_violation() > 0.0);
        assert!(!bad.satisfies_invariants(1e-6));
    }
}
