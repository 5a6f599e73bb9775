//! The nonexistence threshold
//!
//! ```text
//! C(d) = (16/Γ(d/2)) ∫₀^∞ e^{−ρ²} ρ^{d+1} / (2(d−2) + 4ρ²) dρ
//! ```
//!
//! (no local solution exists from `ε·u_C` when `ε > C(d)`), its two-sided
//! bounds, and the classification of `(d, ε)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{gamma_ratio_half, integrate, ln_gamma, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub d: u32,
    #[serde(rename = "C")]
    pub c_value: f64,
    /// `(2/(d−1))·(Γ((d+1)/2)/Γ(d/2))²`.
    pub lower_bound: f64,
    /// `(2/(d−2))^{1/2}·Γ((d+1)/2)/Γ(d/2)`.
    pub upper_bound_1: f64,
    /// `(d−1)/(d−2)`.
    pub upper_bound_2: f64,
    /// Quadrature error estimate plus the analytic tail bound.
    pub error_estimate: f64,
}

impl ThresholdResult {
    /// Smallest gap in `1 < lower < C < upper₁ < upper₂ ≤ 2`; the chain
    /// holds when this is positive (the last link may be an equality).
    pub fn chain_margin(&self) -> f64 {
        [
            self.lower_bound - 1.0,
            self.c_value - self.lower_bound,
            self.upper_bound_1 - self.c_value,
            self.upper_bound_2 - self.upper_bound_1,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
        .min(if self.upper_bound_2 <= 2.0 {
            f64::INFINITY
        } else {
            2.0 - self.upper_bound_2
        })
    }

    pub fn chain_holds(&self) -> bool {
        self.chain_margin() > self.error_estimate
    }
}

/// Cutoff of the `ρ` integrals, `√(d/2) + 12`.
pub fn tail_cutoff(d: u32) -> f64 {
    (0.5 * d as f64).sqrt() + 12.0
}

/// `∫₀^{ρ*} e^{−ρ²} ρ^p w(ρ) dρ / Γ(d/2)`, split at the peak of the
/// Gaussian moment. Returns `(value, error)`.
fn scaled_moment(
    d: u32,
    p: f64,
    w: impl Fn(f64) -> f64,
    cutoff: f64,
    quad: &QuadratureSpec,
) -> Result<(f64, f64)> {
    let lg = ln_gamma(0.5 * d as f64)?;
    let f = |rho: f64| {
        if rho <= 0.0 {
            0.0
        } else {
            (p * rho.ln() - rho * rho - lg).exp() * w(rho)
        }
    };
    let peak = (0.5 * p).sqrt().min(cutoff);
    let a = integrate(f, 0.0, peak, quad)?;
    let b = integrate(f, peak, cutoff, quad)?;
    Ok((a.value + b.value, a.error + b.error))
}

fn denominator(d: u32, rho: f64) -> f64 {
    2.0 * (d as f64 - 2.0) + 4.0 * rho * rho
}

/// Bound on the part of the `C(d)` integral beyond `ρ*`, already divided by
/// `Γ(d/2)` and multiplied by 16.
fn tail_bound(d: u32, cutoff: f64) -> Result<f64> {
    // ρ^{d+1}/(2(d−2)+4ρ²) ≤ ρ^{d−1}/4 and ρ^{d−1}e^{−ρ²/2} decreases past √(d−1)
    let df = d as f64;
    let log = (df - 1.0) * cutoff.ln() - cutoff * cutoff - cutoff.ln() - ln_gamma(0.5 * df)?;
    Ok(16.0 * 0.25 * log.exp())
}

pub fn compute_threshold(d: u32, quad: &QuadratureSpec) -> Result<ThresholdResult> {
    compute_threshold_with_cutoff(d, tail_cutoff(d), quad)
}

/// As [`compute_threshold`] with an explicit integration cutoff.
pub fn compute_threshold_with_cutoff(
    d: u32,
    cutoff: f64,
    quad: &QuadratureSpec,
) -> Result<ThresholdResult> {
    if d < 3 {
        return Err(Error::InvalidParameter(format!(
            "dimension must be at least 3, got {d}"
        )));
    }
    if !(cutoff > (0.5 * d as f64).sqrt()) {
        return Err(Error::InvalidParameter(format!(
            "cutoff {cutoff} is below the integrand peak"
        )));
    }
    let (integral, err) = scaled_moment(
        d,
        d as f64 + 1.0,
        |rho| 1.0 / denominator(d, rho),
        cutoff,
        quad,
    )?;
    let df = d as f64;
    let ratio = gamma_ratio_half(0.5 * df)?;
    Ok(ThresholdResult {
        d,
        c_value: 16.0 * integral,
        lower_bound: 2.0 / (df - 1.0) * ratio * ratio,
        upper_bound_1: (2.0 / (df - 2.0)).sqrt() * ratio,
        upper_bound_2: (df - 1.0) / (df - 2.0),
        error_estimate: 16.0 * err + tail_bound(d, cutoff)?,
    })
}

/// Both sides of the harmonic–geometric step
/// `∫ e^{−ρ²}ρ^{d+1}/(2(d−2)+4ρ²) ≤ ∫ e^{−ρ²}ρ^{d+1}/(4√(2(d−2))ρ)`,
/// each divided by `Γ(d/2)`.
pub fn mean_inequality_sides(d: u32, quad: &QuadratureSpec) -> Result<(f64, f64)> {
    let cutoff = tail_cutoff(d);
    let k = 4.0 * (2.0 * (d as f64 - 2.0)).sqrt();
    let (lhs, _) = scaled_moment(
        d,
        d as f64 + 1.0,
        |rho| 1.0 / denominator(d, rho),
        cutoff,
        quad,
    )?;
    let (rhs, _) = scaled_moment(d, d as f64, |_| 1.0 / k, cutoff, quad)?;
    Ok((lhs, rhs))
}

/// Both sides of the Cauchy–Schwarz step
/// `(∫e^{−ρ²}ρ^d)² ≤ ∫e^{−ρ²}ρ^{d+1}/D · ∫e^{−ρ²}ρ^{d−1}D`,
/// `D = 2(d−2)+4ρ²`, every integral divided by `Γ(d/2)`.
pub fn cauchy_inequality_sides(d: u32, quad: &QuadratureSpec) -> Result<(f64, f64)> {
    let cutoff = tail_cutoff(d);
    let df = d as f64;
    let (mid, _) = scaled_moment(d, df, |_| 1.0, cutoff, quad)?;
    let (a, _) = scaled_moment(d, df + 1.0, |rho| 1.0 / denominator(d, rho), cutoff, quad)?;
    let (b, _) = scaled_moment(d, df - 1.0, |rho| denominator(d, rho), cutoff, quad)?;
    Ok((mid * mid, a * b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    /// `ε < 1`: a self-similar solution exists.
    SubcriticalExists,
    /// `ε = 1`: the singular stationary solution itself.
    Critical,
    /// `1 < ε ≤ C(d)`: neither existence nor nonexistence is known.
    Indeterminate,
    /// `ε > C(d)`: no local-in-time solution.
    Nonexistent,
}

pub fn classify(
    d: u32,
    eps: f64,
    quad: &QuadratureSpec,
) -> Result<(Classification, ThresholdResult)> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {eps}"
        )));
    }
    let threshold = compute_threshold(d, quad)?;
    let class = if eps < 1.0 {
        Classification::SubcriticalExists
    } else if eps == 1.0 {
        Classification::Critical
    } else if eps <= threshold.c_value {
        Classification::Indeterminate
    } else {
        Classification::Nonexistent
    };
    Ok((class, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn quad() -> QuadratureSpec {
        QuadratureSpec::adaptive(1e-12)
    }

    #[test]
    fn three_dimensional_bounds() {
        let r = compute_threshold(3, &quad()).unwrap();
        assert!((r.lower_bound - 4.0 / PI).abs() < 1e-14);
        assert!((r.upper_bound_1 - 2.0 * 2f64.sqrt() / PI.sqrt()).abs() < 1e-14);
        assert_eq!(r.upper_bound_2, 2.0);
        assert!(r.chain_holds(), "{r:?}");
    }

    #[test]
    fn classification_bands() {
        let q = quad();
        assert_eq!(
            classify(3, 0.5, &q).unwrap().0,
            Classification::SubcriticalExists
        );
        assert_eq!(classify(3, 1.0, &q).unwrap().0, Classification::Critical);
        assert_eq!(classify(3, 2.0, &q).unwrap().0, Classification::Nonexistent);
        let c3 = compute_threshold(3, &q).unwrap().c_value;
        let expected = if 1.3 <= c3 {
            Classification::Indeterminate
        } else {
            Classification::Nonexistent
        };
        assert_eq!(classify(3, 1.3, &q).unwrap().0, expected);
    }

    #[test]
    fn rejects_low_dimension() {
        assert!(compute_threshold(2, &quad()).is_err());
    }
}
