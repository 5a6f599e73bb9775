//! Radial density, the attracting potential gradient
//! `ψ_r = −M/(σ_d r^{d−1})`, and the residual of the radial density equation
//!
//! ```text
//! u_t − u_rr − ((d−1)/r) u_r − u² + u_r ψ_r = 0.
//! ```

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{pchip_slopes, three_point_weights, RadialGrid};
use crate::model::{MassField, ModelParams};
use crate::profile::{shoot_profile_at, ShootingOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    params: ModelParams,
    grid: Arc<RadialGrid>,
    t: f64,
    u: Vec<f64>,
    psi_r: Vec<f64>,
}

impl DensityField {
    pub fn new(
        params: ModelParams,
        grid: Arc<RadialGrid>,
        t: f64,
        u: Vec<f64>,
        psi_r: Vec<f64>,
    ) -> Result<Self> {
        if u.len() != grid.len() || psi_r.len() != grid.len() {
            return Err(Error::Mismatch(format!(
                "{} densities and {} gradients for {} nodes",
                u.len(),
                psi_r.len(),
                grid.len()
            )));
        }
        Ok(Self {
            params,
            grid,
            t,
            u,
            psi_r,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn density(&self) -> &[f64] {
        &self.u
    }

    pub fn psi_r(&self) -> &[f64] {
        &self.psi_r
    }

    /// `max(−min u, max ψ_r, 0)`: how far the field is from `u ≥ 0`,
    /// `ψ_r ≤ 0`.
    pub fn sign_violation(&self) -> f64 {
        let neg_u = self.u.iter().fold(0.0f64, |a, &v| a.max(-v));
        let pos_psi = self.psi_r.iter().fold(0.0f64, |a, &v| a.max(v));
        neg_u.max(pos_psi)
    }

    /// `max_i |r_i ψ_r(r_i)|`.
    pub fn max_r_psi_r(&self) -> f64 {
        self.grid
            .nodes()
            .iter()
            .zip(&self.psi_r)
            .fold(0.0, |a, (&r, &p)| a.max((r * p).abs()))
    }
}

/// How `u = M_r/(σ_d r^{d−1})` is obtained from samples of `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Differentiation {
    /// Three-point stencil exact on `{1, r^d, r^{d+2}}`; keeps the order of
    /// accuracy, used for residuals.
    Stencil,
    /// Shape-preserving cubic slopes: `u ≥ 0` whenever `M` is
    /// nondecreasing. Used for exported fields.
    Monotone,
}

/// `ψ_r = −M/(σ_d r^{d−1})` and `u` by monotone differentiation.
pub fn potential_gradient(field: &MassField) -> DensityField {
    potential_gradient_with(field, Differentiation::Monotone)
}

pub fn potential_gradient_with(field: &MassField, method: Differentiation) -> DensityField {
    let p = *field.params();
    let r = field.nodes();
    let m = field.values();
    let d = p.d() as i32;
    let sigma = p.sigma_d();
    let psi_r = r
        .iter()
        .zip(m)
        .map(|(&x, &v)| {
            if x > 0.0 {
                -v / (sigma * x.powi(d - 1))
            } else {
                0.0
            }
        })
        .collect();
    let u = match method {
        Differentiation::Stencil => field.density(),
        Differentiation::Monotone => {
            let slopes = pchip_slopes(r, m);
            let mut u: Vec<f64> = r
                .iter()
                .zip(&slopes)
                .map(|(&x, &s)| {
                    if x > 0.0 {
                        s / (sigma * x.powi(d - 1))
                    } else {
                        0.0
                    }
                })
                .collect();
            u[0] = field.density()[0].max(0.0);
            u
        }
    };
    DensityField {
        params: p,
        grid: Arc::clone(field.grid()),
        t: field.t(),
        u,
        psi_r,
    }
}

/// Terms of the radial density equation at interior node `i`:
/// `[−u_rr, −((d−1)/r)u_r, −u², u_r ψ_r]`.
fn spatial_terms(field: &DensityField, i: usize) -> [f64; 4] {
    let r = field.grid.nodes();
    let u = &field.u;
    let (w1, w2) = three_point_weights(r[i - 1], r[i], r[i + 1]);
    let u_r = w1[0] * u[i - 1] + w1[1] * u[i] + w1[2] * u[i + 1];
    let u_rr = w2[0] * u[i - 1] + w2[1] * u[i] + w2[2] * u[i + 1];
    let d = field.params.dim();
    [
        -u_rr,
        -(d - 1.0) / r[i] * u_r,
        -u[i] * u[i],
        u_r * field.psi_r[i],
    ]
}

/// `u_r ψ_r` at the interior nodes (0 at both ends).
pub fn nonlocal_transport(field: &DensityField) -> Vec<f64> {
    let n = field.u.len();
    let mut out = vec![0.0; n];
    for (i, v) in out.iter_mut().enumerate().take(n - 1).skip(1) {
        *v = spatial_terms(field, i)[3];
    }
    out
}

/// Normalized residual `|Σ terms| / Σ|terms|` at every node, with `u_t`
/// from the two snapshots and the spatial terms averaged between them
/// (0 at both ends).
pub fn radial_residuals(
    density: &DensityField,
    density_prev: &DensityField,
    dt: f64,
) -> Result<Vec<f64>> {
    if density.grid.nodes() != density_prev.grid.nodes() {
        return Err(Error::Mismatch("snapshots use different grids".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let gap = density.t - density_prev.t;
    if (gap - dt).abs() > 1e-9 * dt.max(gap.abs()) {
        return Err(Error::Mismatch(format!(
            "dt = {dt} does not match the snapshot times {} and {}",
            density_prev.t, density.t
        )));
    }
    let n = density.u.len();
    if n < 3 {
        return Err(Error::InvalidParameter("need at least three nodes".into()));
    }
    let mut out = vec![0.0; n];
    for (i, slot) in out.iter_mut().enumerate().take(n - 1).skip(1) {
        let a = spatial_terms(density_prev, i);
        let b = spatial_terms(density, i);
        let u_t = (density.u[i] - density_prev.u[i]) / dt;
        let terms = [
            u_t,
            0.5 * (a[0] + b[0]),
            0.5 * (a[1] + b[1]),
            0.5 * (a[2] + b[2]),
            0.5 * (a[3] + b[3]),
        ];
        let scale: f64 = terms.iter().map(|v| v.abs()).sum();
        if scale > 0.0 {
            *slot = terms.iter().sum::<f64>().abs() / scale;
        }
    }
    Ok(out)
}

/// Largest normalized residual of the radial density equation over the
/// interior nodes.
pub fn radial_equation_residual(
    density: &DensityField,
    density_prev: &DensityField,
    dt: f64,
) -> Result<f64> {
    Ok(radial_residuals(density, density_prev, dt)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// As [`radial_equation_residual`] restricted to nodes in `[lo, hi]`.
pub fn radial_equation_residual_on(
    density: &DensityField,
    density_prev: &DensityField,
    dt: f64,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    let res = radial_residuals(density, density_prev, dt)?;
    Ok(density
        .grid
        .window(lo, hi)
        .map(|i| res[i])
        .fold(0.0, f64::max))
}

/// `M*(t, ·)` and `u*(t, ·)` of the self-similar solution with shooting
/// value `a`, shot directly onto the nodes `r/√t`.
pub fn self_similar_fields(
    params: &ModelParams,
    a: f64,
    grid: Arc<RadialGrid>,
    t: f64,
    opts: &ShootingOptions,
) -> Result<(MassField, DensityField)> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time must be positive, got {t}"
        )));
    }
    let root = t.sqrt();
    let y: Vec<f64> = grid.nodes().iter().map(|&r| r / root).collect();
    let shot = shoot_profile_at(params, a, &y, opts)?;
    let scale = t.powf(0.5 * params.dim() - 1.0);
    let m: Vec<f64> = shot.profile.m_values().iter().map(|&v| scale * v).collect();
    let u: Vec<f64> = shot.profile.u_values().iter().map(|&v| v / t).collect();
    let mass = MassField::new(*params, Arc::clone(&grid), t, m)?;
    let d = params.d() as i32;
    let psi_r = grid
        .nodes()
        .iter()
        .zip(mass.values())
        .map(|(&r, &v)| {
            if r > 0.0 {
                -v / (params.sigma_d() * r.powi(d - 1))
            } else {
                0.0
            }
        })
        .collect();
    let density = DensityField::new(*params, grid, t, u, psi_r)?;
    Ok((mass, density))
}

/// One row of a density export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub r: f64,
    pub u: f64,
    pub psi_r: f64,
    pub residual: f64,
}

pub fn density_rows(field: &DensityField, residuals: Option<&[f64]>) -> Vec<DensityRow> {
    field
        .grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &r)| DensityRow {
            r,
            u: field.u[i],
            psi_r: field.psi_r[i],
            residual: residuals.map_or(0.0, |res| res[i]),
        })
        .collect()
}
