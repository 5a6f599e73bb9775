//! Quadrature on finite intervals.
//!
//! Two schemes are provided: adaptive Gauss–Kronrod (7/15) subdivision for
//! smooth integrands, and tanh-sinh (double-exponential) quadrature for
//! integrands with integrable algebraic singularities at the endpoints.
//!
//! The tanh-sinh integrand receives the abscissa together with its distances
//! to both endpoints, computed without cancellation, so factors like
//! `(1 - s)^(-0.9)` can be evaluated accurately right up to the endpoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which quadrature rule to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    AdaptiveSubdivision,
    DoubleExponential,
}

/// Quadrature controls shared by every integral in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of interval halvings (tanh-sinh levels or bisection depth).
    pub max_depth: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            scheme: Scheme::DoubleExponential,
            abs_tol: 1e-300,
            rel_tol: 1e-13,
            max_depth: 12,
        }
    }
}

impl QuadratureSpec {
    pub fn new(scheme: Scheme, abs_tol: f64, rel_tol: f64, max_depth: u32) -> Result<Self> {
        let spec = Self {
            scheme,
            abs_tol,
            rel_tol,
            max_depth,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn tanh_sinh(rel_tol: f64) -> Self {
        Self {
            scheme: Scheme::DoubleExponential,
            rel_tol,
            ..Self::default()
        }
    }

    pub fn adaptive(rel_tol: f64) -> Self {
        Self {
            scheme: Scheme::AdaptiveSubdivision,
            abs_tol: 1e-300,
            rel_tol,
            max_depth: 40,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) || self.max_depth < 1 {
            return Err(Error::InvalidParameter(format!(
                "quadrature tolerances must be positive and depth >= 1 (got abs {}, rel {}, depth {})",
                self.abs_tol, self.rel_tol, self.max_depth
            )));
        }
        Ok(())
    }

    fn accepts(&self, err: f64, value: f64) -> bool {
        err <= self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Result of a quadrature together with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Integrate `f` over `[a, b]` with the scheme selected in `spec`.
pub fn integrate<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Quadrature>
where
    F: Fn(f64) -> f64,
{
    match spec.scheme {
        Scheme::AdaptiveSubdivision => gauss_kronrod(f, a, b, spec),
        Scheme::DoubleExponential => tanh_sinh(|x, _, _| f(x), a, b, spec),
    }
}

/// Tanh-sinh quadrature. `f(x, x - a, b - x)` receives both endpoint
/// distances computed without cancellation.
pub fn tanh_sinh<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Quadrature>
where
    F: Fn(f64, f64, f64) -> f64,
{
    spec.validate()?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "tanh-sinh needs a finite interval, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if b < a {
        let q = tanh_sinh_forward(&|x, xa, xb| f(x, xb, xa), b, a, spec)?;
        return Ok(Quadrature {
            value: -q.value,
            ..q
        });
    }
    tanh_sinh_forward(&f, a, b, spec)
}

fn tanh_sinh_forward(
    f: &dyn Fn(f64, f64, f64) -> f64,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<Quadrature> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    const HALF_PI: f64 = std::f64::consts::FRAC_PI_2;
    // Beyond this the endpoint distance underflows double precision.
    const T_MAX: f64 = 6.5;

    let mut evaluations = 0usize;
    // Contribution of one node pair (+t, -t).
    let pair = |t: f64, evals: &mut usize| -> f64 {
        let u = HALF_PI * t.sinh();
        let cu = u.cosh();
        let w = HALF_PI * t.cosh() / (cu * cu);
        // 1 - tanh(u) = e^{-u}/cosh(u), 1 + tanh(u) = e^{u}/cosh(u)
        let near = half * (-u).exp() / cu;
        let far = half * u.exp() / cu;
        let mut s = 0.0;
        if near > 0.0 {
            let v = f(b - near, far, near);
            *evals += 1;
            if v.is_finite() {
                s += v;
            }
            let v = f(a + near, near, far);
            *evals += 1;
            if v.is_finite() {
                s += v;
            }
        }
        w * s
    };

    let mut h = 1.0;
    let mut sum = HALF_PI * f(mid, half, half);
    evaluations += 1;
    let mut k = 1;
    loop {
        let t = k as f64 * h;
        if t > T_MAX {
            break;
        }
        sum += pair(t, &mut evaluations);
        k += 1;
    }
    let mut estimate = h * sum * half;
    let mut error = f64::INFINITY;

    for level in 1..=spec.max_depth {
        h *= 0.5;
        let mut k = 1;
        loop {
            let t = k as f64 * h;
            if t > T_MAX {
                break;
            }
            sum += pair(t, &mut evaluations);
            k += 2;
        }
        let next = h * sum * half;
        error = (next - estimate).abs();
        estimate = next;
        // a single agreeing refinement can be a coincidence
        if level >= 3 && spec.accepts(error, estimate) {
            return Ok(Quadrature {
                value: estimate,
                error,
                evaluations,
            });
        }
    }
    Err(Error::QuadratureFailed {
        estimate,
        error,
        depth: spec.max_depth,
    })
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = G_WEIGHTS[3] * fc;
    for j in 0..7 {
        let x = h * GK_NODES[j];
        let pair = f(c - x) + f(c + x);
        kronrod += GK_WEIGHTS[j] * pair;
        if j % 2 == 1 {
            gauss += G_WEIGHTS[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss–Kronrod 7/15 quadrature.
pub fn gauss_kronrod<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Quadrature>
where
    F: Fn(f64) -> f64,
{
    spec.validate()?;
    struct Piece {
        a: f64,
        b: f64,
        value: f64,
        error: f64,
        depth: u32,
    }
    let (value, error) = gk15(&f, a, b);
    let mut pieces = vec![Piece {
        a,
        b,
        value,
        error,
        depth: 0,
    }];
    let mut evaluations = 15;
    // Subdivision budget: every piece may be split down to max_depth, but
    // the total number of pieces is capped to keep runaway integrands finite.
    let max_pieces = 2000usize;
    loop {
        let total: f64 = pieces.iter().map(|p| p.value).sum();
        let err: f64 = pieces.iter().map(|p| p.error).sum();
        if spec.accepts(err, total) {
            return Ok(Quadrature {
                value: total,
                error: err,
                evaluations,
            });
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| p.depth < spec.max_depth)
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .unwrap_or((usize::MAX, &pieces[0]));
        if idx == usize::MAX || pieces.len() >= max_pieces {
            return Err(Error::QuadratureFailed {
                estimate: total,
                error: err,
                depth: spec.max_depth,
            });
        }
        let p = pieces.swap_remove(idx);
        let m = 0.5 * (p.a + p.b);
        let (v1, e1) = gk15(&f, p.a, m);
        let (v2, e2) = gk15(&f, m, p.b);
        evaluations += 30;
        pieces.push(Piece {
            a: p.a,
            b: m,
            value: v1,
            error: e1,
            depth: p.depth + 1,
        });
        pieces.push(Piece {
            a: m,
            b: p.b,
            value: v2,
            error: e2,
            depth: p.depth + 1,
        });
    }
}
