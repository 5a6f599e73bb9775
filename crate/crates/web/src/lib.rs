//! Browser bindings: the threshold table, barrier curves and matched
//! self-similar profiles.

use kslab::barrier::{barrier_value, BarrierSpec};
use kslab::blowup::compute_threshold;
use kslab::model::ModelParams;
use kslab::profile::match_profile;
use kslab::specfun::QuadratureSpec;
use wasm_bindgen::prelude::*;

/// Columns per row of [`threshold_table`].
pub const TABLE_COLUMNS: usize = 5;

/// Rows `[d, C, lower, upper₁, upper₂]` for `d_min..=d_max`, flattened.
pub fn threshold_rows(d_min: u32, d_max: u32) -> Result<Vec<f64>, String> {
    if d_max < d_min || d_max > 400 {
        return Err(format!("bad dimension range {d_min}..{d_max}"));
    }
    let quad = QuadratureSpec::adaptive(1e-10);
    let mut out = Vec::with_capacity(TABLE_COLUMNS * (d_max - d_min + 1) as usize);
    for d in d_min..=d_max {
        let r = compute_threshold(d, &quad).map_err(|e| e.to_string())?;
        out.extend([
            d as f64,
            r.c_value,
            r.lower_bound,
            r.upper_bound_1,
            r.upper_bound_2,
        ]);
    }
    Ok(out)
}

/// `M/(2σ_d r^{d−2})` of the upper or lower barrier at time `t` on `n`
/// uniform intervals of `(0, r_max]`; the first entry is `r = 0`.
pub fn barrier_samples(
    d: u32,
    epsilon: f64,
    upper: bool,
    t: f64,
    r_max: f64,
    n: usize,
) -> Result<Vec<f64>, String> {
    if n == 0 || !(r_max > 0.0) {
        return Err("need n ≥ 1 and r_max > 0".into());
    }
    let p = ModelParams::new(d, epsilon).map_err(|e| e.to_string())?;
    let spec = if upper {
        BarrierSpec::upper(p)
    } else {
        BarrierSpec::lower(p)
    }
    .map_err(|e| e.to_string())?;
    let quad = QuadratureSpec::tanh_sinh(1e-10);
    (0..=n)
        .map(|i| {
            let r = r_max * i as f64 / n as f64;
            if r == 0.0 {
                return Ok(0.0);
            }
            let m = barrier_value(&spec, t, r, &quad).map_err(|e| e.to_string())?;
            Ok(p.normalize(r, m))
        })
        .collect()
}

#[wasm_bindgen]
pub struct ProfileView {
    a_star: f64,
    y: Vec<f64>,
    normalized: Vec<f64>,
    u: Vec<f64>,
}

#[wasm_bindgen]
impl ProfileView {
    #[wasm_bindgen(getter)]
    pub fn a_star(&self) -> f64 {
        self.a_star
    }

    #[wasm_bindgen(getter)]
    pub fn y(&self) -> Vec<f64> {
        self.y.clone()
    }

    /// `𝓜/(2σ_d y^{d−2})`, rising from 0 to `ε`.
    #[wasm_bindgen(getter)]
    pub fn normalized(&self) -> Vec<f64> {
        self.normalized.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn u(&self) -> Vec<f64> {
        self.u.clone()
    }
}

/// Matched profile, thinned to every `stride`-th node.
pub fn matched_profile(
    d: u32,
    epsilon: f64,
    y_max: f64,
    stride: usize,
) -> Result<ProfileView, String> {
    let p = ModelParams::new(d, epsilon).map_err(|e| e.to_string())?;
    let m = match_profile(&p, y_max, 1e-10).map_err(|e| e.to_string())?;
    let prof = &m.shot.profile;
    let keep = |i: &usize| i.is_multiple_of(stride.max(1));
    let pick = |v: &[f64]| {
        v.iter()
            .enumerate()
            .filter(|(i, _)| keep(i))
            .map(|(_, &x)| x)
            .collect()
    };
    Ok(ProfileView {
        a_star: m.a_star,
        y: pick(prof.y_nodes()),
        normalized: pick(&prof.normalized()),
        u: pick(prof.u_values()),
    })
}

#[wasm_bindgen]
pub fn threshold_table(d_min: u32, d_max: u32) -> Result<Vec<f64>, JsError> {
    threshold_rows(d_min, d_max).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn barrier_curve(
    d: u32,
    epsilon: f64,
    upper: bool,
    t: f64,
    r_max: f64,
    n: usize,
) -> Result<Vec<f64>, JsError> {
    barrier_samples(d, epsilon, upper, t, r_max, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn profile(d: u32, epsilon: f64, y_max: f64) -> Result<ProfileView, JsError> {
    matched_profile(d, epsilon, y_max, 10).map_err(|e| JsError::new(&e))
}
