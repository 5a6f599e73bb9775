//! Special functions used throughout the crate: Gamma and Beta, the modified
//! Bessel function of the first kind `I_ν`, and the confluent hypergeometric
//! function `₁F₁` through its Euler integral, plus the Gaussian–Bessel
//! integral identity that links the two.

pub mod quad;

use statrs::function::gamma as sgamma;

use crate::error::{Error, Result};
pub use quad::{integrate, QuadratureSpec, Scheme};

/// Γ(x) for x > 0.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gamma_fn needs x > 0, got {x}"
        )));
    }
    let g = sgamma::gamma(x);
    if !g.is_finite() {
        return Err(Error::Overflow(format!("Γ({x})")));
    }
    Ok(g)
}

/// ln Γ(x) for x > 0; use this for large arguments.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "ln_gamma needs x > 0, got {x}"
        )));
    }
    Ok(sgamma::ln_gamma(x))
}

/// Γ(x + 1/2)/Γ(x) without overflow.
pub fn gamma_ratio_half(x: f64) -> Result<f64> {
    Ok((ln_gamma(x + 0.5)? - ln_gamma(x)?).exp())
}

/// Euler Beta function B(x, y) = Γ(x)Γ(y)/Γ(x+y).
pub fn beta_fn(x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0 && y > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta_fn needs positive arguments, got ({x}, {y})"
        )));
    }
    if x + y < 150.0 {
        Ok(gamma_fn(x)? * gamma_fn(y)? / gamma_fn(x + y)?)
    } else {
        Ok((ln_gamma(x)? + ln_gamma(y)? - ln_gamma(x + y)?).exp())
    }
}

/// Arguments above this use the large-x asymptotic expansion of `I_ν`.
pub const BESSEL_SERIES_LIMIT: f64 = 30.0;

/// Exponentially scaled modified Bessel function e^{-x} I_ν(x).
pub fn bessel_i_scaled(nu: f64, x: f64) -> Result<f64> {
    check_bessel_args(nu, x)?;
    if x == 0.0 {
        return Ok(if nu == 0.0 { 1.0 } else { 0.0 });
    }
    if x <= BESSEL_SERIES_LIMIT || (x <= 500.0 && nu * nu > 0.25 * x) {
        bessel_i_series_scaled(nu, x)
    } else if nu * nu > 0.25 * x {
        Err(Error::InvalidParameter(format!(
            "I_ν(x) with ν = {nu}, x = {x}: order too large for the asymptotic expansion"
        )))
    } else {
        Ok(bessel_i_asymptotic_scaled(nu, x))
    }
}

/// Modified Bessel function of the first kind I_ν(x), ν ≥ 0, x ≥ 0.
pub fn bessel_i(nu: f64, x: f64) -> Result<f64> {
    let scaled = bessel_i_scaled(nu, x)?;
    let v = scaled * x.exp();
    if !v.is_finite() {
        return Err(Error::Overflow(format!("I_{nu}({x})")));
    }
    Ok(v)
}

fn check_bessel_args(nu: f64, x: f64) -> Result<()> {
    if !(nu >= 0.0) || !(x >= 0.0) || !x.is_finite() || !nu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bessel_i needs ν ≥ 0 and finite x ≥ 0, got ν = {nu}, x = {x}"
        )));
    }
    Ok(())
}

/// Power series Σ (x/2)^{2m+ν}/(m! Γ(m+ν+1)), scaled by e^{-x}.
pub(crate) fn bessel_i_series_scaled(nu: f64, x: f64) -> Result<f64> {
    let half = 0.5 * x;
    let log_lead = nu * half.ln() - ln_gamma(nu + 1.0)? - x;
    let q = half * half;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut m = 0.0;
    loop {
        m += 1.0;
        term *= q / (m * (m + nu));
        sum += term;
        if term < 1e-17 * sum && m > half {
            break;
        }
    }
    Ok((log_lead + sum.ln()).exp())
}

/// Hankel asymptotic expansion e^{-x} I_ν(x) ~ (2πx)^{-1/2} Σ (-1)^k a_k(ν)/x^k.
pub(crate) fn bessel_i_asymptotic_scaled(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= -(mu - odd * odd) / (8.0 * kf * x);
        if term.abs() >= prev {
            break;
        }
        sum += term;
        prev = term.abs();
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// e^{-max(z,0)} ∫₀¹ s^{a-1}(1-s)^{c-1} e^{zs} ds for a, c > 0.
///
/// The interval is split at 1/2 and each half is mapped by `w = s^a`
/// (resp. `v = (1-s)^c`), which removes the algebraic endpoint factor.
/// For |z| large the exponential boundary layer gets its own piece.
pub fn beta_exp_integral_scaled(a: f64, c: f64, z: f64, quad: &QuadratureSpec) -> Result<f64> {
    if !(a > 0.0 && c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Euler integral needs positive exponents, got a = {a}, c = {c}"
        )));
    }
    if !z.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Euler integral needs finite z, got {z}"
        )));
    }
    let shift = z.max(0.0);
    let ts = quad::QuadratureSpec {
        scheme: Scheme::DoubleExponential,
        ..*quad
    };

    // Left half, s = w^{1/a}.
    let left_integrand = |w: f64| -> f64 {
        let s = w.powf(1.0 / a);
        (1.0 - s).powf(c - 1.0) * (z * s - shift).exp()
    };
    let w_end = 0.5f64.powf(a);
    let mut left = 0.0;
    let mut breaks = vec![0.0];
    if z < -40.0 {
        let wc = (40.0 / -z).powf(a);
        if wc < w_end {
            breaks.push(wc);
        }
    }
    breaks.push(w_end);
    for pair in breaks.windows(2) {
        left += quad::tanh_sinh(|w, _, _| left_integrand(w), pair[0], pair[1], &ts)?.value;
    }
    left /= a;

    // Right half, 1 - s = v^{1/c}.
    let right_integrand = |v: f64| -> f64 {
        let one_minus_s = v.powf(1.0 / c);
        (1.0 - one_minus_s).powf(a - 1.0) * (z * (1.0 - one_minus_s) - shift).exp()
    };
    let v_end = 0.5f64.powf(c);
    let mut right = 0.0;
    let mut breaks = vec![0.0];
    if z > 40.0 {
        let vc = (40.0 / z).powf(c);
        if vc < v_end {
            breaks.push(vc);
        }
    }
    breaks.push(v_end);
    for pair in breaks.windows(2) {
        right += quad::tanh_sinh(|v, _, _| right_integrand(v), pair[0], pair[1], &ts)?.value;
    }
    right /= c;

    Ok(left + right)
}

fn check_hyp_domain(a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && b > a) {
        return Err(Error::InvalidParameter(format!(
            "integral representation of 1F1 needs 0 < a < b, got a = {a}, b = {b}"
        )));
    }
    Ok(())
}

/// ln of Γ(b)/(Γ(a)Γ(b-a)).
fn kummer_log_prefactor(a: f64, b: f64) -> Result<f64> {
    Ok(ln_gamma(b)? - ln_gamma(a)? - ln_gamma(b - a)?)
}

/// ₁F₁(a; b; z) through Γ(b)/(Γ(a)Γ(b−a)) ∫₀¹ s^{a−1}(1−s)^{b−a−1} e^{zs} ds, 0 < a < b.
pub fn hyp1f1(a: f64, b: f64, z: f64, quad: &QuadratureSpec) -> Result<f64> {
    check_hyp_domain(a, b)?;
    let integral = beta_exp_integral_scaled(a, b - a, z, quad)?;
    let v = (kummer_log_prefactor(a, b)? + z.max(0.0)).exp() * integral;
    if !v.is_finite() {
        return Err(Error::Overflow(format!("1F1({a}; {b}; {z})")));
    }
    Ok(v)
}

/// e^{-z} ₁F₁(a; b; z) for z ≥ 0, same domain as [`hyp1f1`].
pub fn hyp1f1_scaled(a: f64, b: f64, z: f64, quad: &QuadratureSpec) -> Result<f64> {
    check_hyp_domain(a, b)?;
    if z < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "hyp1f1_scaled needs z ≥ 0, got {z}"
        )));
    }
    let integral = beta_exp_integral_scaled(a, b - a, z, quad)?;
    Ok(kummer_log_prefactor(a, b)?.exp() * integral)
}

/// ₁F₁ beyond the integral-representation domain: falls back to the
/// positive-term power series when `a ≥ b` and `z ≥ 0`.
pub fn hyp1f1_extended(a: f64, b: f64, z: f64, quad: &QuadratureSpec) -> Result<f64> {
    if a > 0.0 && b > a {
        return hyp1f1(a, b, z, quad);
    }
    if !(a > 0.0 && b > 0.0 && z >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "1F1({a}; {b}; {z}) outside the supported domain"
        )));
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut m = 0.0;
    loop {
        term *= (a + m) * z / ((b + m) * (m + 1.0));
        sum += term;
        m += 1.0;
        if !sum.is_finite() {
            return Err(Error::Overflow(format!("1F1({a}; {b}; {z})")));
        }
        if term < 1e-17 * sum && m > z {
            break;
        }
        if m > 1e6 {
            return Err(Error::QuadratureFailed {
                estimate: sum,
                error: term,
                depth: 0,
            });
        }
    }
    Ok(sum)
}

fn check_prudnikov(beta: f64, nu: f64, p: f64, q: f64) -> Result<()> {
    if !(p > 0.0 && q > 0.0 && nu >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Gaussian-Bessel integral needs p, q > 0 and ν ≥ 0 (p = {p}, q = {q}, ν = {nu})"
        )));
    }
    if !(beta + nu > 0.0) {
        return Err(Error::Divergent(format!(
            "∫ s^(β-1) e^(-ps²) I_ν(qs) ds diverges at 0 for β + ν = {}",
            beta + nu
        )));
    }
    Ok(())
}

/// ∫₀^∞ s^{β−1} e^{−ps²} I_ν(qs) ds by direct quadrature.
///
/// The infinite range is cut at a point where the concave log-majorant
/// `(β−1) ln s − ps² + qs` bounds the remaining tail below 1% of the
/// requested tolerance.
pub fn prudnikov_lhs(beta: f64, nu: f64, p: f64, q: f64, quad: &QuadratureSpec) -> Result<f64> {
    check_prudnikov(beta, nu, p, q)?;
    let log_major = |s: f64| (beta - 1.0) * s.ln() - p * s * s + q * s;
    let integrand = |s: f64| -> f64 {
        if s == 0.0 {
            return 0.0;
        }
        let scaled = bessel_i_scaled(nu, q * s).unwrap_or(f64::NAN);
        (log_major(s)).exp() * scaled
    };
    // Location of the Gaussian-exponential peak.
    let peak = (q + (q * q + 8.0 * p * (beta - 1.0).max(0.0)).sqrt()) / (4.0 * p);
    let width = 1.0 / p.sqrt();
    let ts = QuadratureSpec {
        scheme: Scheme::DoubleExponential,
        ..*quad
    };

    let mut cut = peak + 8.0 * width;
    let mut body = 0.0;
    let mut done_to = 0.0;
    let mut pieces = Vec::new();
    if peak > 0.0 {
        pieces.push(peak);
    }
    for _ in 0..60 {
        // integrate [done_to, cut] through any pending interior break
        let mut lo = done_to;
        let start = done_to;
        for &b in pieces.iter().filter(|&&b| b > start && b < cut) {
            body += quad::tanh_sinh(|s, _, _| integrand(s), lo, b, &ts)?.value;
            lo = b;
        }
        body += quad::tanh_sinh(|s, _, _| integrand(s), lo, cut, &ts)?.value;
        done_to = cut;

        let slope = (beta - 1.0) / cut - 2.0 * p * cut + q;
        let concave_from = if beta >= 1.0 {
            0.0
        } else {
            ((1.0 - beta) / (2.0 * p)).sqrt()
        };
        if slope < 0.0 && cut >= concave_from {
            let tail = log_major(cut).exp() / slope.abs();
            if tail <= 0.01 * quad.abs_tol.max(quad.rel_tol * body.abs()) {
                return Ok(body);
            }
        }
        cut += 4.0 * width;
    }
    Err(Error::QuadratureFailed {
        estimate: body,
        error: f64::NAN,
        depth: quad.max_depth,
    })
}

/// Closed form q^ν/(2^{ν+1} p^{(β+ν)/2}) Γ((β+ν)/2)/Γ(ν+1) ₁F₁((β+ν)/2; ν+1; q²/4p).
pub fn prudnikov_rhs(beta: f64, nu: f64, p: f64, q: f64, quad: &QuadratureSpec) -> Result<f64> {
    check_prudnikov(beta, nu, p, q)?;
    let a = 0.5 * (beta + nu);
    let log_pref = nu * q.ln() - (nu + 1.0) * std::f64::consts::LN_2 - a * p.ln() + ln_gamma(a)?
        - ln_gamma(nu + 1.0)?;
    Ok(log_pref.exp() * hyp1f1_extended(a, nu + 1.0, q * q / (4.0 * p), quad)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn gamma_known_values() {
        assert!(rel(gamma_fn(1.0).unwrap(), 1.0) < 1e-14);
        assert!(rel(gamma_fn(0.5).unwrap(), PI.sqrt()) < 1e-14);
        // Γ(5.5) = 4.5·3.5·2.5·1.5·0.5·√π
        let rec = 4.5 * 3.5 * 2.5 * 1.5 * 0.5 * PI.sqrt();
        assert!(rel(gamma_fn(5.5).unwrap(), rec) < 1e-13);
        assert!(rel(rec, 52.342_777_784_553_52) < 1e-14);
        assert!(gamma_fn(0.0).is_err());
        assert!(gamma_fn(-1.5).is_err());
    }

    #[test]
    fn beta_known_values() {
        assert!(rel(beta_fn(1.0, 1.0).unwrap(), 1.0) < 1e-12);
        assert!(rel(beta_fn(0.5, 0.5).unwrap(), PI) < 1e-12);
        // ∫₀¹ s^{1/2} ds = 2/3
        assert!(rel(beta_fn(1.5, 1.0).unwrap(), 2.0 / 3.0) < 1e-12);
        assert!(beta_fn(0.0, 1.0).is_err());
    }

    #[test]
    fn bessel_half_order_closed_form() {
        let v = bessel_i(0.5, 1.0).unwrap();
        let exact = (2.0 / PI).sqrt() * 1f64.sinh();
        assert!(rel(v, exact) < 1e-12);
        for &x in &[0.1, 5.0, 29.0, 31.0, 80.0, 300.0] {
            let exact_scaled = (2.0 / (PI * x)).sqrt() * 0.5 * (1.0 - (-2.0 * x).exp());
            assert!(
                rel(bessel_i_scaled(0.5, x).unwrap(), exact_scaled) < 1e-12,
                "x = {x}"
            );
        }
    }

    #[test]
    fn bessel_at_zero() {
        assert_eq!(bessel_i(2.0, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_i(0.0, 0.0).unwrap(), 1.0);
        assert!(bessel_i(-1.0, 1.0).is_err());
        assert!(matches!(bessel_i(0.0, 800.0), Err(Error::Overflow(_))));
        assert!(bessel_i_scaled(0.0, 800.0).is_ok());
    }

    #[test]
    fn bessel_branches_overlap() {
        for &nu in &[0.0, 0.5, 1.0, 1.5, 2.5, 4.0] {
            for i in 0..=20 {
                let x = 30.0 + i as f64 * 0.5;
                let s = bessel_i_series_scaled(nu, x).unwrap();
                let a = bessel_i_asymptotic_scaled(nu, x);
                assert!(rel(a, s) < 1e-9, "ν = {nu}, x = {x}: {a} vs {s}");
            }
        }
    }

    #[test]
    fn hyp1f1_elementary_cases() {
        let quad = QuadratureSpec::default();
        assert!(rel(hyp1f1(0.7, 2.3, 0.0, &quad).unwrap(), 1.0) < 1e-12);
        for &z in &[-20.0, -1.0, 0.5, 3.0, 25.0] {
            let exact = (f64::exp(z) - 1.0) / z;
            assert!(
                rel(hyp1f1(1.0, 2.0, z, &quad).unwrap(), exact) < 1e-12,
                "z = {z}"
            );
        }
        assert!(hyp1f1(2.0, 1.0, 1.0, &quad).is_err());
        assert!(hyp1f1(0.0, 1.0, 1.0, &quad).is_err());
    }

    #[test]
    fn scaled_integral_handles_large_argument() {
        // a = 1, c = 1: e^{-z}(e^z - 1)/z
        let quad = QuadratureSpec::default();
        for &z in &[100.0, 1e3, 1e5] {
            let v = beta_exp_integral_scaled(1.0, 1.0, z, &quad).unwrap();
            let exact = -f64::exp_m1(-z) / z;
            assert!(rel(v, exact) < 1e-12, "z = {z}: {v} vs {exact}");
        }
    }

    #[test]
    fn prudnikov_gaussian_moment_limit() {
        // q → 0 with ν = 0: ½ p^{-β/2} Γ(β/2)
        let quad = QuadratureSpec::tanh_sinh(1e-12);
        let (beta, p) = (3.0, 1.7);
        let lhs = prudnikov_lhs(beta, 0.0, p, 1e-9, &quad).unwrap();
        let exact = 0.5 * p.powf(-beta / 2.0) * gamma_fn(beta / 2.0).unwrap();
        assert!(rel(lhs, exact) < 1e-9);
    }

    #[test]
    fn prudnikov_rejects_divergent() {
        let quad = QuadratureSpec::default();
        assert!(matches!(
            prudnikov_lhs(-1.0, 0.5, 1.0, 1.0, &quad),
            Err(Error::Divergent(_))
        ));
        assert!(prudnikov_lhs(1.0, 0.5, 0.0, 1.0, &quad).is_err());
    }
}
