//! Radial grids and the small amount of node-based calculus the solvers need:
//! monotone cubic interpolation, finite-difference derivatives on nonuniform
//! nodes and cumulative quadrature of sampled data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default stretching exponent of [`RadialGrid::geometric`]. With 2048
/// intervals it puts the first node at about `1e-4 · r_max`.
pub const DEFAULT_STRETCH: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Stretching {
    Uniform,
    /// Consecutive spacings grow by the constant factor `ratio`.
    Geometric {
        ratio: f64,
    },
    Custom,
}

/// Strictly increasing radii `0 = r_0 < r_1 < … < r_N = r_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    stretching: Stretching,
}

impl RadialGrid {
    pub fn uniform(r_max: f64, intervals: usize) -> Result<Self> {
        check_extent(r_max, intervals)?;
        let h = r_max / intervals as f64;
        let mut nodes: Vec<f64> = (0..=intervals).map(|i| i as f64 * h).collect();
        nodes[intervals] = r_max;
        Ok(Self {
            nodes,
            stretching: Stretching::Uniform,
        })
    }

    /// Geometric grid refined toward the origin,
    /// `r_i = r_max · expm1(α i/N) / expm1(α)`.
    ///
    /// For fixed `α` this is a smooth map of a uniform grid, so refinement
    /// studies at different `N` see the same stretching profile.
    pub fn geometric(r_max: f64, intervals: usize, stretch: f64) -> Result<Self> {
        check_extent(r_max, intervals)?;
        if !(stretch > 0.0 && stretch.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid stretch must be positive, got {stretch}"
            )));
        }
        let n = intervals as f64;
        let denom = stretch.exp_m1();
        let mut nodes: Vec<f64> = (0..=intervals)
            .map(|i| r_max * (stretch * i as f64 / n).exp_m1() / denom)
            .collect();
        nodes[intervals] = r_max;
        Ok(Self {
            nodes,
            stretching: Stretching::Geometric {
                ratio: (stretch / n).exp(),
            },
        })
    }

    pub fn default_geometric(r_max: f64, intervals: usize) -> Result<Self> {
        Self::geometric(r_max, intervals, DEFAULT_STRETCH)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 || nodes[0] != 0.0 {
            return Err(Error::InvalidParameter(
                "grid needs at least three nodes starting at r = 0".into(),
            ));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || !nodes.iter().all(|r| r.is_finite()) {
            return Err(Error::InvalidParameter(
                "grid nodes must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            nodes,
            stretching: Stretching::Custom,
        })
    }

    /// The same grid scaled by `factor` (all radii multiplied).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            nodes: self.nodes.iter().map(|r| r * factor).collect(),
            stretching: self.stretching,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn stretching(&self) -> Stretching {
        self.stretching
    }

    /// Number of intervals N (there are N + 1 nodes).
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn max_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Index range of nodes with `lo <= r <= hi`.
    pub fn window(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = self.nodes.partition_point(|&r| r < lo);
        let end = self.nodes.partition_point(|&r| r <= hi);
        start..end.max(start)
    }
}

fn check_extent(r_max: f64, intervals: usize) -> Result<()> {
    if !(r_max > 0.0 && r_max.is_finite()) || intervals < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid needs r_max > 0 and at least 2 intervals (got {r_max}, {intervals})"
        )));
    }
    Ok(())
}

/// Monotone piecewise cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::Mismatch(format!(
                "interpolation needs matching abscissae/ordinates (got {} and {})",
                x.len(),
                y.len()
            )));
        }
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            slopes: pchip_slopes(x, y),
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// Value at `t`; outside the data range the end intervals are extended.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let k = self.x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1;
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (y0, y1) = (self.y[k], self.y[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }
}

/// Shape-preserving derivative estimates at the data points.
pub fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] <= 0.0 {
            d[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = pchip_end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = pchip_end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn pchip_end(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= 0.0 {
        0.0
    } else if del0 * del1 <= 0.0 && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

/// Weights of the three-point first and second derivative at the middle
/// node of `x0 < x1 < x2`.
pub fn three_point_weights(x0: f64, x1: f64, x2: f64) -> ([f64; 3], [f64; 3]) {
    let hm = x1 - x0;
    let hp = x2 - x1;
    let d1 = [
        -hp / (hm * (hm + hp)),
        (hp - hm) / (hm * hp),
        hm / (hp * (hm + hp)),
    ];
    let d2 = [
        2.0 / (hm * (hm + hp)),
        -2.0 / (hm * hp),
        2.0 / (hp * (hm + hp)),
    ];
    (d1, d2)
}

/// First and second derivatives at every node by three-point differences
/// (one-sided at the two ends).
pub fn derivatives(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 1..n - 1 {
        let (w1, w2) = three_point_weights(x[i - 1], x[i], x[i + 1]);
        d1[i] = w1[0] * y[i - 1] + w1[1] * y[i] + w1[2] * y[i + 1];
        d2[i] = w2[0] * y[i - 1] + w2[1] * y[i] + w2[2] * y[i + 1];
    }
    // one-sided: quadratic through the three end nodes
    let end = |i0: usize, at: usize| -> (f64, f64) {
        let (xa, xb, xc) = (x[i0], x[i0 + 1], x[i0 + 2]);
        let (ya, yb, yc) = (y[i0], y[i0 + 1], y[i0 + 2]);
        let t = x[at];
        let la = ((t - xb) + (t - xc)) / ((xa - xb) * (xa - xc));
        let lb = ((t - xa) + (t - xc)) / ((xb - xa) * (xb - xc));
        let lc = ((t - xa) + (t - xb)) / ((xc - xa) * (xc - xb));
        let sa = 2.0 / ((xa - xb) * (xa - xc));
        let sb = 2.0 / ((xb - xa) * (xb - xc));
        let sc = 2.0 / ((xc - xa) * (xc - xb));
        (la * ya + lb * yb + lc * yc, sa * ya + sb * yb + sc * yc)
    };
    let (a, b) = end(0, 0);
    d1[0] = a;
    d2[0] = b;
    let (a, b) = end(n - 3, n - 1);
    d1[n - 1] = a;
    d2[n - 1] = b;
    (d1, d2)
}

/// Running integral `∫_{x_0}^{x_i} f` of sampled data, fourth order on
/// smooth grids: each interval integrates the cubic through the four
/// nearest nodes.
pub fn cumulative_integral(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    if n < 4 {
        for i in 1..n {
            out[i] = out[i - 1] + 0.5 * (f[i] + f[i - 1]) * (x[i] - x[i - 1]);
        }
        return out;
    }
    for i in 1..n {
        let start = (i as isize - 2).clamp(0, n as isize - 4) as usize;
        let xs = &x[start..start + 4];
        let fs = &f[start..start + 4];
        out[i] = out[i - 1] + integrate_cubic(xs, fs, x[i - 1], x[i]);
    }
    out
}

/// Value at `t` of the cubic through the four data points nearest `t`.
/// Smooth data only: unlike [`MonotoneCubic`] nothing is limited.
pub fn interpolate_cubic(x: &[f64], y: &[f64], t: f64) -> f64 {
    let n = x.len();
    if n < 4 {
        let k = x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1;
        let s = (t - x[k]) / (x[k + 1] - x[k]);
        return y[k] + s * (y[k + 1] - y[k]);
    }
    let k = x.partition_point(|&v| v <= t);
    let start = (k as isize - 2).clamp(0, n as isize - 4) as usize;
    lagrange(&x[start..start + 4], &y[start..start + 4], t)
}

fn lagrange(xs: &[f64], fs: &[f64], t: f64) -> f64 {
    let mut p = 0.0;
    for j in 0..xs.len() {
        let mut l = 1.0;
        for m in 0..xs.len() {
            if m != j {
                l *= (t - xs[m]) / (xs[j] - xs[m]);
            }
        }
        p += l * fs[j];
    }
    p
}

/// ∫_a^b of the Lagrange cubic through four points, by 3-point Gauss rule.
fn integrate_cubic(xs: &[f64], fs: &[f64], a: f64, b: f64) -> f64 {
    const G: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
    const W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for k in 0..3 {
        s += W[k] * lagrange(xs, fs, c + h * G[k]);
    }
    s * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let x: Vec<f64> = (0..10).map(|i| (i as f64).powf(1.3)).collect();
        let f = |t: f64| 2.0 - t + 0.5 * t * t - 0.1 * t * t * t;
        let y: Vec<f64> = x.iter().map(|&t| f(t)).collect();
        for t in [0.0, 0.3, 2.2, 7.7, 19.0] {
            assert!((interpolate_cubic(&x, &y, t) - f(t)).abs() < 1e-10);
        }
    }

    #[test]
    fn geometric_ratio_is_constant() {
        let g = RadialGrid::geometric(40.0, 512, 2.5).unwrap();
        let r = g.nodes();
        assert_eq!(r[0], 0.0);
        let ratio = match g.stretching() {
            Stretching::Geometric { ratio } => ratio,
            _ => unreachable!(),
        };
        for i in 1..r.len() - 1 {
            let q = (r[i + 1] - r[i]) / (r[i] - r[i - 1]);
            assert!((q - ratio).abs() < 1e-9, "i = {i}: {q} vs {ratio}");
        }
        let g = RadialGrid::default_geometric(1.0, 2048).unwrap();
        let first = g.nodes()[1];
        assert!(first > 0.5e-4 && first < 2e-4, "{first}");
    }

    #[test]
    fn grid_validation() {
        assert!(RadialGrid::uniform(0.0, 10).is_err());
        assert!(RadialGrid::uniform(1.0, 1).is_err());
        assert!(RadialGrid::from_nodes(vec![0.0, 1.0, 1.0]).is_err());
        assert!(RadialGrid::from_nodes(vec![0.1, 1.0, 2.0]).is_err());
        assert!(RadialGrid::from_nodes(vec![0.0, 1.0, 2.0]).is_ok());
    }

    #[test]
    fn window_selects_inclusive_range() {
        let g = RadialGrid::uniform(10.0, 10).unwrap();
        let w = g.window(2.0, 5.0);
        assert_eq!(&g.nodes()[w], &[2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn monotone_cubic_reproduces_nodes_and_stays_monotone() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).powi(2)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.min(5.0)).collect();
        let p = MonotoneCubic::new(&x, &y).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((p.eval(*a) - b).abs() < 1e-14);
        }
        let mut prev = f64::NEG_INFINITY;
        for k in 0..1000 {
            let t = x[19] * k as f64 / 999.0;
            let v = p.eval(t);
            assert!(v >= prev - 1e-14);
            prev = v;
        }
    }

    #[test]
    fn derivatives_are_second_order() {
        let errs: Vec<f64> = [64usize, 128]
            .iter()
            .map(|&n| {
                let g = RadialGrid::geometric(3.0, n, 2.0).unwrap();
                let x = g.nodes();
                let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
                let (d1, d2) = derivatives(x, &y);
                (0..x.len())
                    .map(|i| (d1[i] - x[i].cos()).abs().max((d2[i] + x[i].sin()).abs()))
                    .fold(0.0, f64::max)
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 0.9, "order {order}");
    }

    #[test]
    fn cumulative_integral_is_fourth_order() {
        let errs: Vec<f64> = [100usize, 200]
            .iter()
            .map(|&n| {
                let g = RadialGrid::geometric(2.0, n, 2.0).unwrap();
                let x = g.nodes();
                let f: Vec<f64> = x.iter().map(|v| v.exp()).collect();
                let c = cumulative_integral(x, &f);
                (0..x.len())
                    .map(|i| (c[i] - x[i].exp_m1()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[1] < 1e-8, "{errs:?}");
        assert!((errs[0] / errs[1]).log2() > 3.5, "{errs:?}");
    }
}
