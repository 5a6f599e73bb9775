//! Explicit solutions of the linear Bessel-drift problem
//! `m_t = m_rr − (λ/r) m_r`, `m(0, r) = c₀ r^{d−2}`, which bound the
//! nonlinear mass equation from above (`λ = d−1−2ε`) and below (`λ = d−1`).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::model::ModelParams;
use crate::specfun::{self, QuadratureSpec};

/// Largest `ε` used when building the upper barrier. At `ε = 1` the drift
/// exponent reaches `d − 3` and `Γ((λ−d+3)/2)` is infinite.
pub const EPSILON_CLAMP: f64 = 1.0 - 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    lambda: f64,
    c0: f64,
    params: ModelParams,
    /// Set when the canonical upper barrier had to clamp `ε`.
    clamped: bool,
}

impl BarrierSpec {
    pub fn new(params: ModelParams, lambda: f64, c0: f64) -> Result<Self> {
        let d = params.dim();
        if !(lambda > d - 3.0 && lambda <= d - 1.0) {
            return Err(Error::InvalidParameter(format!(
                "drift exponent must lie in (d−3, d−1] = ({}, {}], got {lambda}",
                d - 3.0,
                d - 1.0
            )));
        }
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "amplitude must be positive, got {c0}"
            )));
        }
        Ok(Self {
            lambda,
            c0,
            params,
            clamped: false,
        })
    }

    /// `λ = d − 1 − 2ε`, `c₀ = ε·2σ_d`; `ε` is clamped to [`EPSILON_CLAMP`]
    /// in the drift (see [`BarrierSpec::is_clamped`]).
    pub fn upper(params: ModelParams) -> Result<Self> {
        let eps = params.epsilon();
        let eps_drift = eps.min(EPSILON_CLAMP);
        let mut spec = Self::new(
            params,
            params.dim() - 1.0 - 2.0 * eps_drift,
            homogeneous_amplitude(&params),
        )?;
        spec.clamped = eps_drift < eps;
        Ok(spec)
    }

    /// `λ = d − 1`, `c₀ = ε·2σ_d`: the heat flow of the homogeneous datum.
    pub fn lower(params: ModelParams) -> Result<Self> {
        Self::new(params, params.dim() - 1.0, homogeneous_amplitude(&params))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn is_clamped(&self) -> bool {
        self.clamped
    }

    /// `κ = (λ − d + 3)/2 ∈ (0, 1]`.
    pub fn kappa(&self) -> f64 {
        0.5 * (self.lambda - self.params.dim() + 3.0)
    }

    /// `2^{d−3−λ}/Γ(κ)`, the prefactor of the explicit solution.
    pub fn prefactor(&self) -> Result<f64> {
        let d = self.params.dim();
        Ok(2f64.powf(d - 3.0 - self.lambda) / specfun::gamma_fn(self.kappa())?)
    }
}

fn homogeneous_amplitude(params: &ModelParams) -> f64 {
    params.epsilon() * 2.0 * params.sigma_d()
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "time must be positive, got {t}"
        )));
    }
    Ok(())
}

/// `m(t, r)` from the explicit formula
/// `2^{d−3−λ}/Γ(κ) · c₀ t^{−κ} r^{λ+1} e^{−r²/4t} ∫₀¹ s^{d/2−1}(1−s)^{κ−1} e^{(r²/4t)s} ds`.
///
/// Evaluated as `c₀ r^{d−2} z^κ J(z)/Γ(κ)` with `z = r²/4t` and the scaled
/// integral `J(z) = e^{−z}∫…`, which tends to `c₀ r^{d−2}` for large `z`.
pub fn barrier_value(spec: &BarrierSpec, t: f64, r: f64, quad: &QuadratureSpec) -> Result<f64> {
    check_time(t)?;
    if !(r >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "radius must be nonnegative, got {r}"
        )));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let d = spec.params.dim();
    let kappa = spec.kappa();
    let z = r * r / (4.0 * t);
    let j = specfun::beta_exp_integral_scaled(0.5 * d, kappa, z, quad)?;
    let log_scale = kappa * z.ln() - specfun::ln_gamma(kappa)?;
    Ok(spec.c0 * r.powf(d - 2.0) * j * log_scale.exp())
}

/// Transition density of the Bessel-drift semigroup,
/// `(1/2t) e^{−(r²+s²)/4t} (rs)^{(λ+1)/2} I_{(λ+1)/2}(rs/2t)`.
pub fn barrier_kernel(spec: &BarrierSpec, t: f64, r: f64, s: f64) -> Result<f64> {
    check_time(t)?;
    if !(r >= 0.0 && s >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kernel needs nonnegative radii, got r = {r}, s = {s}"
        )));
    }
    if r == 0.0 || s == 0.0 {
        return Ok(0.0);
    }
    let nu = 0.5 * (spec.lambda + 1.0);
    let x = r * s / (2.0 * t);
    let scaled = specfun::bessel_i_scaled(nu, x)?;
    // e^{-(r²+s²)/4t} e^{x} = e^{-(r-s)²/4t}
    let log_rest = nu * (r * s).ln() - (r - s) * (r - s) / (4.0 * t);
    Ok(scaled * log_rest.exp() / (2.0 * t))
}

/// `g(t) = ∫₀^{√t·y*} m(t, r)/r^{d−1} dr`, integrated in `r` with the
/// explicit solution as integrand. Independent of `t` in exact arithmetic.
pub fn g_diagnostic(spec: &BarrierSpec, t: f64, y_star: f64, quad: &QuadratureSpec) -> Result<f64> {
    check_time(t)?;
    if !(y_star >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "y* must be nonnegative, got {y_star}"
        )));
    }
    if spec.kappa() <= 0.0 {
        return Err(Error::Divergent(format!(
            "m/r^(d-1) behaves like r^{} at the origin",
            spec.lambda - spec.params.dim() + 2.0
        )));
    }
    if y_star == 0.0 {
        return Ok(0.0);
    }
    let d = spec.params.dim();
    let inner = QuadratureSpec {
        rel_tol: quad.rel_tol * 1e-2,
        ..*quad
    };
    let failure = std::cell::Cell::new(None);
    let integrand = |r: f64, _: f64, _: f64| -> f64 {
        match barrier_value(spec, t, r, &inner) {
            Ok(m) => m / r.powf(d - 1.0),
            Err(e) => {
                failure.set(Some(e));
                0.0
            }
        }
    };
    let outer = QuadratureSpec {
        scheme: specfun::Scheme::DoubleExponential,
        ..*quad
    };
    let q = specfun::quad::tanh_sinh(integrand, 0.0, t.sqrt() * y_star, &outer)?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(q.value)
}

/// `2^{d−3−λ}c₀/Γ(κ) · B(d/2, κ) · y*^{2κ}/(2κ)`, the upper bound for `g`.
pub fn g_bound(spec: &BarrierSpec, y_star: f64) -> Result<f64> {
    let d = spec.params.dim();
    let kappa = spec.kappa();
    Ok(
        spec.prefactor()? * spec.c0 * specfun::beta_fn(0.5 * d, kappa)? * y_star.powf(2.0 * kappa)
            / (2.0 * kappa),
    )
}

/// `m(t, ·)` sampled on a grid.
#[derive(Debug, Clone)]
pub struct BarrierField {
    spec: BarrierSpec,
    t: f64,
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl BarrierField {
    pub fn evaluate(
        spec: BarrierSpec,
        t: f64,
        grid: Arc<RadialGrid>,
        quad: &QuadratureSpec,
    ) -> Result<Self> {
        let values = crate::par::try_map(grid.nodes(), |&r| barrier_value(&spec, t, r, quad))?;
        Ok(Self {
            spec,
            t,
            grid,
            values,
        })
    }

    pub fn spec(&self) -> &BarrierSpec {
        &self.spec
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest normalized drop `m_i − m_{i+1}` (0 for a nondecreasing field).
    pub fn monotonicity_violation(&self) -> f64 {
        let r = self.grid.nodes();
        let p = self.spec.params;
        (0..self.values.len() - 1).fold(0.0, |acc, i| {
            acc.max(p.normalize(r[i + 1], self.values[i] - self.values[i + 1]))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> QuadratureSpec {
        QuadratureSpec::tanh_sinh(1e-13)
    }

    fn params() -> ModelParams {
        ModelParams::new(3, 0.5).unwrap()
    }

    #[test]
    fn spec_validation() {
        let p = params();
        assert!(BarrierSpec::new(p, 0.0, 1.0).is_err());
        assert!(BarrierSpec::new(p, 2.5, 1.0).is_err());
        assert!(BarrierSpec::new(p, 1.0, 0.0).is_err());
        let up = BarrierSpec::upper(p).unwrap();
        assert!((up.lambda() - 1.0).abs() < 1e-15);
        assert!(!up.is_clamped());
        let crit = BarrierSpec::upper(ModelParams::new(3, 1.0).unwrap()).unwrap();
        assert!(crit.is_clamped());
        assert!(crit.kappa() > 0.0);
    }

    #[test]
    fn origin_and_far_field() {
        let spec = BarrierSpec::upper(params()).unwrap();
        assert_eq!(barrier_value(&spec, 1.0, 0.0, &quad()).unwrap(), 0.0);
        assert!(barrier_value(&spec, 0.0, 1.0, &quad()).is_err());
        let r = 60.0;
        let m = barrier_value(&spec, 1.0, r, &quad()).unwrap();
        // m → c₀ r^{d−2} with a relative correction of order t/r²
        assert!((m / (spec.c0() * r) - 1.0).abs() < 2e-3);
    }

    #[test]
    fn lower_barrier_closed_form() {
        let p = params();
        let spec = BarrierSpec::lower(p).unwrap();
        let (t, r) = (0.7, 1.3);
        let z = r * r / (4.0 * t);
        // ε (σ_d/2) t^{-1} r^d e^{-z} ∫₀¹ s^{1/2} e^{zs} ds, the integral by
        // a plain Gauss–Kronrod run
        let int = specfun::quad::gauss_kronrod(
            |s| s.sqrt() * (z * s).exp(),
            0.0,
            1.0,
            &QuadratureSpec::adaptive(1e-14),
        )
        .unwrap()
        .value;
        let expected = p.epsilon() * p.sigma_d() / 2.0 / t * r.powi(3) * (-z).exp() * int;
        let got = barrier_value(&spec, t, r, &quad()).unwrap();
        assert!(
            (got - expected).abs() < 1e-12 * expected,
            "{got} vs {expected}"
        );
    }

    #[test]
    fn kernel_symmetry_and_zero() {
        let spec = BarrierSpec::upper(params()).unwrap();
        assert_eq!(barrier_kernel(&spec, 1.0, 1.0, 0.0).unwrap(), 0.0);
        for (r, s) in [(0.3, 2.0), (5.0, 7.5), (40.0, 41.0)] {
            let a = barrier_kernel(&spec, 0.8, r, s).unwrap();
            let b = barrier_kernel(&spec, 0.8, s, r).unwrap();
            assert!((a - b).abs() <= 1e-14 * a.abs());
        }
    }

    #[test]
    fn g_vanishes_with_range_and_rejects_bad_input() {
        let spec = BarrierSpec::upper(params()).unwrap();
        assert_eq!(g_diagnostic(&spec, 1.0, 0.0, &quad()).unwrap(), 0.0);
        assert!(g_diagnostic(&spec, -1.0, 1.0, &quad()).is_err());
    }
}
