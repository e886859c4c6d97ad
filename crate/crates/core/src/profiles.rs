//! Reference density, pressure and entropy profiles of the self-similar
//! expanding solution on the fixed Lagrangian grid over `[0, 1]`.
//!
//! The pressure is fixed by hydrostatic balance in the comoving frame,
//! `p̄' = -δ x ρ̄` with `p̄(1) = 0`, and the entropy of the reference state is
//! `c_ν log(p̄ / ρ̄^γ) + s̄`.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{trapezoid, UniformGrid};

/// Value stored where the entropy is `-∞` (vacuum nodes).
pub const ENTROPY_SENTINEL: f64 = -1.0e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityKind {
    /// `scale · (1 - x)^ϱ`.
    Power,
    /// `ρ̄ ≡ scale`: density jumps to vacuum at the free surface.
    Constant,
    /// Power law with `ϱ = 1/(γ-1)`, so that `p̄ ≍ ρ̄^γ` at the surface.
    EntropyBounded,
}

impl DensityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DensityKind::Power => "power",
            DensityKind::Constant => "constant",
            DensityKind::EntropyBounded => "entropy_bounded",
        }
    }
}

impl FromStr for DensityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(DensityKind::Power),
            "constant" => Ok(DensityKind::Constant),
            "entropy_bounded" => Ok(DensityKind::EntropyBounded),
            other => Err(Error::invalid(format!(
                "unknown profile kind '{other}' (expected power, constant or entropy_bounded)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    pub kind: DensityKind,
    pub varrho: f64,
    pub scale: f64,
    pub gamma: f64,
    pub grid: UniformGrid,
    pub rho_bar: Vec<f64>,
    /// `∫₀¹ y² ρ̄ dy`.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureProfile {
    pub delta: f64,
    pub p_bar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyProfile {
    pub c_nu: f64,
    pub s_bar: f64,
    pub s: Vec<f64>,
    pub valid: Vec<bool>,
    pub bounded: bool,
    /// Fitted slope of `s` against `log(1 - x)` near the free surface.
    pub boundary_slope: f64,
}

pub fn build_density_profile(
    kind: DensityKind,
    varrho: f64,
    scale: f64,
    gamma: f64,
    n: usize,
) -> Result<DensityProfile> {
    if !scale.is_finite() || !gamma.is_finite() || !varrho.is_finite() {
        return Err(Error::invalid("profile parameters must be finite"));
    }
    if n < 8 {
        return Err(Error::invalid(format!("grid needs at least 8 intervals, got {n}")));
    }
    if !(scale > 0.0) {
        return Err(Error::invalid("profile scale must be positive"));
    }
    let varrho = match kind {
        DensityKind::Constant => 0.0,
        DensityKind::EntropyBounded => {
            if !(gamma > 1.0) {
                return Err(Error::invalid(
                    "entropy_bounded profile requires gamma > 1",
                ));
            }
            1.0 / (gamma - 1.0)
        }
        DensityKind::Power => {
            if !(varrho >= 0.0) {
                return Err(Error::invalid("vacuum exponent must be nonnegative"));
            }
            varrho
        }
    };
    let grid = UniformGrid::new(n);
    let rho_bar: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| {
            if varrho == 0.0 {
                scale
            } else {
                scale * (1.0 - x).powf(varrho)
            }
        })
        .collect();
    let weighted: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(&rho_bar)
        .map(|(x, r)| x * x * r)
        .collect();
    let mass = trapezoid(&weighted, grid.spacing());
    Ok(DensityProfile {
        kind,
        varrho,
        scale,
        gamma,
        grid,
        rho_bar,
        mass,
    })
}

/// `p̄(x) = δ ∫ₓ¹ s ρ̄(s) ds`, accumulated inward from the surface with the
/// trapezoid rule.
pub fn pressure_profile(profile: &DensityProfile, delta: f64) -> Result<PressureProfile> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid("delta must be positive and finite"));
    }
    let x = profile.grid.nodes();
    let h = profile.grid.spacing();
    let n = profile.grid.intervals();
    let f: Vec<f64> = x.iter().zip(&profile.rho_bar).map(|(x, r)| x * r).collect();
    let mut p_bar = vec![0.0; n + 1];
    for i in (0..n).rev() {
        p_bar[i] = p_bar[i + 1] + delta * 0.5 * h * (f[i] + f[i + 1]);
    }
    Ok(PressureProfile { delta, p_bar })
}

pub fn entropy_profile(
    profile: &DensityProfile,
    pressure: &PressureProfile,
    c_nu: f64,
    s_bar: f64,
    gamma: f64,
) -> Result<EntropyProfile> {
    if !(c_nu > 0.0) {
        return Err(Error::invalid("c_nu must be positive"));
    }
    let x = profile.grid.nodes();
    let mut s = Vec::with_capacity(x.len());
    let mut valid = Vec::with_capacity(x.len());
    for (r, p) in profile.rho_bar.iter().zip(&pressure.p_bar) {
        if *r > 0.0 && *p > 0.0 {
            s.push(c_nu * (p / r.powf(gamma)).ln() + s_bar);
            valid.push(true);
        } else {
            s.push(ENTROPY_SENTINEL);
            valid.push(false);
        }
    }
    let interior_finite = x
        .iter()
        .zip(&s)
        .zip(&valid)
        .filter(|((x, _), _)| **x < 1.0)
        .all(|((_, s), v)| *v && s.is_finite());
    let boundary_slope = surface_log_slope(x, &s, &valid);
    // The entropy has a finite one-sided limit at the surface iff it does not
    // scale with a power of log(1 - x) there.
    let bounded = interior_finite && boundary_slope.abs() <= 0.05 * c_nu;
    Ok(EntropyProfile {
        c_nu,
        s_bar,
        s,
        valid,
        bounded,
        boundary_slope,
    })
}

/// Coefficient `b` of the fit `s ≈ a + b·log(1-x) + c·(1-x)` over nodes
/// 8..=32 cells from the surface (clipped to a quarter of the grid). The
/// linear term absorbs the first regular correction so that `b` isolates
/// the logarithmic blow-up; the innermost cells are skipped because the
/// quadrature for `p̄` is least accurate there.
fn surface_log_slope(x: &[f64], s: &[f64], valid: &[bool]) -> f64 {
    let n = x.len() - 1;
    let far = (n / 4).clamp(3, 32);
    let near = (far / 4).max(1);
    let mut m = [[0.0; 3]; 3];
    let mut r = [0.0; 3];
    let mut count = 0;
    for k in near..=far {
        let i = n - k;
        if !valid[i] {
            continue;
        }
        let basis = [1.0, (1.0 - x[i]).ln(), 1.0 - x[i]];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += basis[a] * basis[b];
            }
            r[a] += basis[a] * s[i];
        }
        count += 1;
    }
    if count < 3 {
        return f64::INFINITY;
    }
    solve3(m, r).map(|c| c[1]).unwrap_or(f64::INFINITY)
}

/// Cramer's rule for the 3×3 normal equations above.
fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut a = m;
        for row in 0..3 {
            a[row][col] = r[row];
        }
        *o = det(a) / d;
    }
    Some(out)
}

/// CSV with columns `x, rho_bar, p_bar, s`.
pub fn profile_csv(
    profile: &DensityProfile,
    pressure: &PressureProfile,
    entropy: &EntropyProfile,
) -> String {
    let mut out = String::from("x,rho_bar,p_bar,s\n");
    for (i, x) in profile.grid.nodes().iter().enumerate() {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            x, profile.rho_bar[i], pressure.p_bar[i], entropy.s[i]
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn constant_profile_has_mass_one_third() {
        let p = build_density_profile(DensityKind::Constant, 5.0, 1.0, 1.5, 64).unwrap();
        assert_eq!(p.varrho, 0.0);
        assert!(p.rho_bar.iter().all(|r| *r == 1.0));
        // trapezoid error for x^2 is h^2/6
        assert!(close(p.mass, 1.0 / 3.0, 1.0 / (6.0 * 64.0 * 64.0) + 1e-15));
    }

    #[test]
    fn power_profile_evaluates_formula() {
        let p = build_density_profile(DensityKind::Power, 1.0, 1.0, 1.5, 64).unwrap();
        assert_eq!(p.rho_bar[32], 0.5);
        assert_eq!(p.rho_bar[64], 0.0);
    }

    #[test]
    fn entropy_bounded_kind_solves_exponent_balance() {
        let p = build_density_profile(DensityKind::EntropyBounded, 0.0, 1.0, 1.5, 64).unwrap();
        assert!(close(p.varrho, 2.0, 1e-15));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_density_profile(DensityKind::Power, 1.0, 1.0, 1.5, 4).is_err());
        assert!(build_density_profile(DensityKind::Power, 1.0, 0.0, 1.5, 64).is_err());
        assert!(build_density_profile(DensityKind::Power, f64::NAN, 1.0, 1.5, 64).is_err());
        assert!(build_density_profile(DensityKind::EntropyBounded, 0.0, 1.0, 1.0, 64).is_err());
        let p = build_density_profile(DensityKind::Constant, 0.0, 1.0, 1.5, 64).unwrap();
        assert!(pressure_profile(&p, 0.0).is_err());
    }

    #[test]
    fn constant_density_pressure_is_exact_parabola() {
        let p = build_density_profile(DensityKind::Constant, 0.0, 1.0, 1.5, 64).unwrap();
        let pr = pressure_profile(&p, 1.0).unwrap();
        for (x, pb) in p.grid.nodes().iter().zip(&pr.p_bar) {
            assert!(close(*pb, (1.0 - x * x) / 2.0, 1e-14));
        }
        assert_eq!(pr.p_bar[64], 0.0);
    }

    #[test]
    fn linear_density_pressure_matches_hand_integral() {
        let p = build_density_profile(DensityKind::Power, 1.0, 1.0, 1.5, 64).unwrap();
        let pr = pressure_profile(&p, 1.0).unwrap();
        // ∫ₓ¹ s(1-s) ds = 1/6 - x²/2 + x³/3; trapezoid error <= h²/12 · max|f''| = h²/6
        let h2 = 1.0 / (64.0 * 64.0);
        for (x, pb) in p.grid.nodes().iter().zip(&pr.p_bar) {
            let exact = 1.0 / 6.0 - x * x / 2.0 + x * x * x / 3.0;
            assert!(close(*pb, exact, h2 / 6.0 + 1e-15));
        }
        assert!(close(pr.p_bar[0], 1.0 / 6.0, h2 / 6.0));
    }

    #[test]
    fn constant_density_entropy_is_unbounded() {
        let p = build_density_profile(DensityKind::Constant, 0.0, 1.0, 1.5, 64).unwrap();
        let pr = pressure_profile(&p, 1.0).unwrap();
        let e = entropy_profile(&p, &pr, 1.0, 0.0, 1.5).unwrap();
        assert!(close(e.s[0], 0.5_f64.ln(), 1e-14));
        assert!(!e.bounded);
        assert!(!e.valid[64]);
        assert_eq!(e.s[64], ENTROPY_SENTINEL);
    }

    #[test]
    fn entropy_shift_under_density_rescaling() {
        // ρ̄ → 2ρ̄ doubles p̄ too: s shifts by c_ν log(2 / 2^γ).
        let gamma = 1.5;
        let c_nu = 0.7;
        let p1 = build_density_profile(DensityKind::Constant, 0.0, 1.0, gamma, 64).unwrap();
        let p2 = build_density_profile(DensityKind::Constant, 0.0, 2.0, gamma, 64).unwrap();
        let e1 = entropy_profile(&p1, &pressure_profile(&p1, 1.0).unwrap(), c_nu, 0.0, gamma).unwrap();
        let e2 = entropy_profile(&p2, &pressure_profile(&p2, 1.0).unwrap(), c_nu, 0.0, gamma).unwrap();
        let shift = c_nu * (2.0 / 2.0_f64.powf(gamma)).ln();
        for i in 0..64 {
            assert!(close(e2.s[i], e1.s[i] + shift, 1e-12));
        }
    }

    #[test]
    fn bounded_flag_selects_the_balanced_exponent() {
        let gamma = 1.5;
        for (varrho, expect) in [(0.0, false), (1.0, false), (2.0, true), (3.0, false)] {
            for n in [64, 256] {
                let p = build_density_profile(DensityKind::Power, varrho, 1.0, gamma, n).unwrap();
                let pr = pressure_profile(&p, 1.0).unwrap();
                let e = entropy_profile(&p, &pr, 1.0, 0.0, gamma).unwrap();
                assert_eq!(e.bounded, expect, "varrho {varrho} n {n} slope {}", e.boundary_slope);
            }
        }
    }

    #[test]
    fn pressure_derivative_converges_at_second_order() {
        let err = |n: usize| {
            let p = build_density_profile(DensityKind::Power, 2.0, 1.0, 1.5, n).unwrap();
            let pr = pressure_profile(&p, 1.3).unwrap();
            let h = p.grid.spacing();
            let x = p.grid.nodes();
            (1..n)
                .map(|i| {
                    let d = (pr.p_bar[i + 1] - pr.p_bar[i - 1]) / (2.0 * h);
                    (d + 1.3 * x[i] * p.rho_bar[i]).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(64) / err(128);
        assert!((3.6..4.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn density_stays_in_factor_two_band_near_surface() {
        let p = build_density_profile(DensityKind::Power, 1.7, 2.0, 1.5, 128).unwrap();
        for (x, r) in p.grid.nodes().iter().zip(&p.rho_bar) {
            if *x > 0.5 && *x < 1.0 {
                let model = 2.0 * (1.0 - x).powf(1.7);
                assert!(*r >= 0.5 * model && *r <= 2.0 * model);
            }
        }
    }

    #[test]
    fn csv_has_header_and_one_row_per_node() {
        let p = build_density_profile(DensityKind::Power, 1.0, 1.0, 1.5, 16).unwrap();
        let pr = pressure_profile(&p, 1.0).unwrap();
        let e = entropy_profile(&p, &pr, 1.0, 0.0, 1.5).unwrap();
        let csv = profile_csv(&p, &pr, &e);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "x,rho_bar,p_bar,s");
        assert_eq!(lines.len(), 18);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn pressure_is_nonincreasing(varrho in 0.0f64..4.0, scale in 0.1f64..10.0, delta in 0.1f64..5.0) {
                let p = build_density_profile(DensityKind::Power, varrho, scale, 1.5, 32).unwrap();
                let pr = pressure_profile(&p, delta).unwrap();
                prop_assert_eq!(pr.p_bar[32], 0.0);
                for w in pr.p_bar.windows(2) {
                    prop_assert!(w[1] <= w[0]);
                }
                prop_assert!(p.mass > 0.0);
            }
        }
    }
}
