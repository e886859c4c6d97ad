//! Browser bindings: expansion-rate curves, the admissible-regime scan and
//! background profiles, each returned as a flat `Float64Array` so the page
//! can plot without any glue beyond `wasm-bindgen`.

use vacuumflow::indices::{feasible_window, regime, Case};
use vacuumflow::profiles::{build_density_profile, entropy_profile, pressure_profile, DensityKind};
use vacuumflow::selfsim::{integrate_alpha_t, SelfSimParams};
use wasm_bindgen::prelude::*;

/// Values per row of [`alpha_curve`]: `t, alpha, alpha', invariant`.
pub const ALPHA_STRIDE: usize = 4;
/// Values per row of [`regime_scan`]: `gamma, I0, I1, I2, case1, case2, case3`.
pub const REGIME_STRIDE: usize = 7;
/// Values per row of [`profile_curves`]: `x, rho_bar, p_bar, s`.
pub const PROFILE_STRIDE: usize = 4;

pub fn alpha_curve_rows(
    gamma: f64,
    delta: f64,
    alpha0: f64,
    alpha1: f64,
    t_end: f64,
    samples: usize,
) -> Result<Vec<f64>, String> {
    if samples < 2 {
        return Err("need at least two samples".into());
    }
    let params = SelfSimParams::new(delta, gamma, alpha0, alpha1).map_err(|e| e.to_string())?;
    let traj = integrate_alpha_t(params, t_end, 1e-9).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(samples * ALPHA_STRIDE);
    for k in 0..samples {
        let t = (t_end * k as f64 / (samples - 1) as f64).min(traj.end_time());
        let (a, ap) = traj.eval(t).ok_or("sample outside the trajectory")?;
        out.extend([t, a, ap, params.invariant(a, ap)]);
    }
    Ok(out)
}

pub fn regime_scan_rows(gamma_lo: f64, gamma_hi: f64, count: usize, grid: usize) -> Result<Vec<f64>, String> {
    if count < 2 || !(gamma_hi > gamma_lo) {
        return Err("need count >= 2 and gamma_hi > gamma_lo".into());
    }
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let mut out = Vec::with_capacity(count * REGIME_STRIDE);
    for k in 0..count {
        let g = gamma_lo + (gamma_hi - gamma_lo) * k as f64 / (count - 1) as f64;
        let r = regime(g);
        out.extend([g, flag(r.i0), flag(r.i1), flag(r.i2)]);
        for case in [Case::One, Case::Two, Case::Three] {
            let w = feasible_window(g, case, grid).map_err(|e| e.to_string())?;
            out.push(flag(w.is_some()));
        }
    }
    Ok(out)
}

/// Entropy values are `NaN` where the profile leaves them undefined.
pub fn profile_rows(kind: &str, varrho: f64, gamma: f64, delta: f64, n: usize) -> Result<Vec<f64>, String> {
    let kind: DensityKind = kind.parse().map_err(|_| format!("unknown profile `{kind}`"))?;
    let rho = build_density_profile(kind, varrho, 1.0, gamma, n).map_err(|e| e.to_string())?;
    let p = pressure_profile(&rho, delta).map_err(|e| e.to_string())?;
    let s = entropy_profile(&rho, &p, 1.0, 0.0, gamma).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity((n + 1) * PROFILE_STRIDE);
    for (i, x) in rho.grid.nodes().iter().enumerate() {
        let si = if s.valid[i] { s.s[i] } else { f64::NAN };
        out.extend([*x, rho.rho_bar[i], p.p_bar[i], si]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn alpha_curve(
    gamma: f64,
    delta: f64,
    alpha0: f64,
    alpha1: f64,
    t_end: f64,
    samples: usize,
) -> Result<Vec<f64>, JsError> {
    alpha_curve_rows(gamma, delta, alpha0, alpha1, t_end, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn regime_scan(gamma_lo: f64, gamma_hi: f64, count: usize, grid: usize) -> Result<Vec<f64>, JsError> {
    regime_scan_rows(gamma_lo, gamma_hi, count, grid).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn profile_curves(kind: &str, varrho: f64, gamma: f64, delta: f64, n: usize) -> Result<Vec<f64>, JsError> {
    profile_rows(kind, varrho, gamma, delta, n).map_err(|e| JsError::new(&e))
}
