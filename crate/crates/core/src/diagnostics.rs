//! Energy and dissipation functionals, pressure and entropy monitors, decay
//! fits and the relative entropy of a perturbation.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::indices::IndexSet;
use crate::numerics::{derivative_even, linear_fit, second_derivative_even, sup_abs, trapezoid, UniformGrid};
use crate::solver::{entropy_z, jacobian, volume_power, zeta_tau, PerturbationState, SeriesRow, Solver};

/// `C¹` cutoff: 1 on `[0, 1/2]`, 0 on `[3/4, 1]`, a cubic smoothstep in
/// between with slope bounded below by −6.
pub fn chi_cutoff(x: f64) -> f64 {
    if x <= 0.5 {
        1.0
    } else if x >= 0.75 {
        0.0
    } else {
        let s = (x - 0.5) * 4.0;
        1.0 - s * s * (3.0 - 2.0 * s)
    }
}

pub fn chi_derivative(x: f64) -> f64 {
    if x <= 0.5 || x >= 0.75 {
        0.0
    } else {
        let s = (x - 0.5) * 4.0;
        -24.0 * s * (1.0 - s)
    }
}

pub const E0_LABELS: [&str; 5] = [
    "alpha^r1*norm(x2 rho12 eta_tau)^2",
    "alpha^-l1*norm(x zeta)^2",
    "alpha^r2*norm(x2 rho12 eta_tautau)^2",
    "alpha^-l2*norm(x zeta_tau)^2",
    "norm(x2 rho12 eta)^2",
];
pub const D0_LABELS: [&str; 6] = [
    "alpha^(r1-1)*alpha_tau*norm(x2 rho12 eta_tau)^2",
    "alpha^(r1+2)*norm(x((1+eta)x eta_xtau - x eta_x eta_tau))^2",
    "alpha^(r2-1)*alpha_tau*norm(x2 rho12 eta_tautau)^2",
    "alpha^(r2+2)*norm(x((1+eta)x eta_xtautau - x eta_x eta_tautau))^2",
    "alpha^(-l1-1)*alpha_tau*norm(x zeta)^2",
    "alpha^(-l2-1)*alpha_tau*norm(x zeta_tau)^2",
];
pub const E1_LABELS: [&str; 3] = [
    "alpha^-l3*norm(chi12 zeta)^2",
    "alpha^-r4*norm(chi12 x rho12 eta_tautau)^2",
    "alpha^-l4*norm(chi12 zeta_tau)^2",
];
pub const D1_LABELS: [&str; 5] = [
    "alpha^(-l3-1)*alpha_tau*norm(chi12 zeta)^2",
    "alpha^r3*(norm(chi12 eta_tau)^2+norm(chi12 x eta_xtau)^2)",
    "alpha^(-r4-1)*alpha_tau*norm(chi12 x rho12 eta_tautau)^2",
    "alpha^(2-r4)*(norm(chi12 eta_tautau)^2+norm(chi12 x eta_xtautau)^2)",
    "alpha^(-l4-1)*alpha_tau*norm(chi12 zeta_tau)^2",
];

/// Every weighted term of the energy and dissipation functionals at one
/// instant (before the sup / time integral).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InstantaneousTerms {
    pub e0: [f64; 5],
    pub d0: [f64; 6],
    pub e1: [f64; 3],
    pub d1: [f64; 5],
}

impl InstantaneousTerms {
    pub fn e0_sum(&self) -> f64 {
        self.e0.iter().sum()
    }
    pub fn d0_sum(&self) -> f64 {
        self.d0.iter().sum()
    }
    pub fn e1_sum(&self) -> f64 {
        self.e1.iter().sum()
    }
    pub fn d1_sum(&self) -> f64 {
        self.d1.iter().sum()
    }

    fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.e0.iter().chain(&self.d0).chain(&self.e1).chain(&self.d1).copied()
    }
}

/// The weighted terms at `state`. `η_ττ` is the state's acceleration
/// estimate; `ζ_τ` comes from the energy equation directly.
pub fn instantaneous_terms(
    state: &PerturbationState,
    grid: &UniformGrid,
    rho_bar: &[f64],
    p_bar: &[f64],
    gamma: f64,
    mu: f64,
    set: &IndexSet,
) -> InstantaneousTerms {
    let h = grid.spacing();
    let x = grid.nodes();
    let n1 = x.len();
    let eta = &state.eta;
    let v = &state.v;
    let acc = &state.accel;
    let ex = derivative_even(eta, h);
    let vx = derivative_even(v, h);
    let ax = derivative_even(acc, h);
    let zt = zeta_tau(state, grid, p_bar, gamma, mu);
    let z = &state.zeta;
    let chi: Vec<f64> = x.iter().map(|&x| chi_cutoff(x)).collect();
    let quad = |f: &dyn Fn(usize) -> f64| trapezoid(&(0..n1).map(f).collect::<Vec<_>>(), h);

    let x4rho = |i: usize| x[i].powi(4) * rho_bar[i];
    let n_v = quad(&|i| x4rho(i) * v[i] * v[i]);
    let n_a = quad(&|i| x4rho(i) * acc[i] * acc[i]);
    let n_eta = quad(&|i| x4rho(i) * eta[i] * eta[i]);
    let n_z = quad(&|i| x[i] * x[i] * z[i] * z[i]);
    let n_zt = quad(&|i| x[i] * x[i] * zt[i] * zt[i]);
    let strain = |f: &[f64], fx: &[f64], i: usize| {
        let s = x[i] * ((1.0 + eta[i]) * x[i] * fx[i] - x[i] * ex[i] * f[i]);
        s * s
    };
    let n_sv = quad(&|i| strain(v, &vx, i));
    let n_sa = quad(&|i| strain(acc, &ax, i));
    let c_z = quad(&|i| chi[i] * z[i] * z[i]);
    let c_a = quad(&|i| chi[i] * x[i] * x[i] * rho_bar[i] * acc[i] * acc[i]);
    let c_zt = quad(&|i| chi[i] * zt[i] * zt[i]);
    let c_v = quad(&|i| chi[i] * (v[i] * v[i] + x[i] * x[i] * vx[i] * vx[i]));
    let c_aa = quad(&|i| chi[i] * (acc[i] * acc[i] + x[i] * x[i] * ax[i] * ax[i]));

    let a = state.alpha;
    let at = state.alpha_tau;
    let p = |e: f64| a.powf(e);
    InstantaneousTerms {
        e0: [
            p(set.r1) * n_v,
            p(-set.l1) * n_z,
            p(set.r2) * n_a,
            p(-set.l2) * n_zt,
            n_eta,
        ],
        d0: [
            p(set.r1 - 1.0) * at * n_v,
            p(set.r1 + 2.0) * n_sv,
            p(set.r2 - 1.0) * at * n_a,
            p(set.r2 + 2.0) * n_sa,
            p(-set.l1 - 1.0) * at * n_z,
            p(-set.l2 - 1.0) * at * n_zt,
        ],
        e1: [p(-set.l3) * c_z, p(-set.r4) * c_a, p(-set.l4) * c_zt],
        d1: [
            p(-set.l3 - 1.0) * at * c_z,
            p(set.r3) * c_v,
            p(-set.r4 - 1.0) * at * c_a,
            p(2.0 - set.r4) * c_aa,
            p(-set.l4 - 1.0) * at * c_zt,
        ],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub tau: f64,
    pub terms: InstantaneousTerms,
    pub e0: f64,
    pub e1: f64,
    pub d0: f64,
    pub d1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub e0: f64,
    pub e1: f64,
    pub d0: f64,
    pub d1: f64,
    pub e_in: f64,
    /// Each term's running sup (energies) or τ-integral (dissipations).
    pub breakdown: Vec<(&'static str, f64)>,
    pub rows: Vec<EnergyRow>,
}

/// Functionals over a sequence of states ordered in τ: energies as running
/// suprema, dissipations as trapezoid integrals over the state times.
pub fn energy_report(
    states: &[PerturbationState],
    solver: &Solver,
    set: &IndexSet,
    e_in: f64,
) -> Result<EnergyReport> {
    if !set.feasible() {
        return Err(Error::IndexSetInfeasible);
    }
    let cfg = solver.config();
    let labels: Vec<&'static str> = E0_LABELS
        .iter()
        .chain(&D0_LABELS)
        .chain(&E1_LABELS)
        .chain(&D1_LABELS)
        .copied()
        .collect();
    let is_energy: Vec<bool> = (0..labels.len())
        .map(|k| k < 5 || (11..14).contains(&k))
        .collect();
    let mut acc = vec![0.0_f64; labels.len()];
    let mut rows: Vec<EnergyRow> = Vec::with_capacity(states.len());
    let mut prev: Option<(f64, Vec<f64>)> = None;
    let (mut e0, mut e1) = (0.0_f64, 0.0_f64);
    for s in states {
        let t = instantaneous_terms(s, solver.grid(), solver.rho_bar(), solver.p_bar(), cfg.gamma, cfg.mu, set);
        let flat: Vec<f64> = t.flat().collect();
        for k in 0..flat.len() {
            if is_energy[k] {
                acc[k] = if prev.is_some() { acc[k].max(flat[k]) } else { flat[k] };
            } else if let Some((tau0, ref f0)) = prev {
                acc[k] += 0.5 * (s.tau - tau0) * (f0[k] + flat[k]);
            }
        }
        // The functionals take the sup of the summed terms, not the sum of
        // per-term suprema.
        let first = prev.is_none();
        e0 = if first { t.e0_sum() } else { e0.max(t.e0_sum()) };
        e1 = if first { t.e1_sum() } else { e1.max(t.e1_sum()) };
        let (d0, d1) = (acc[5..11].iter().sum(), acc[14..].iter().sum());
        rows.push(EnergyRow { tau: s.tau, terms: t, e0, e1, d0, d1 });
        prev = Some((s.tau, flat));
    }
    let last = rows.last();
    Ok(EnergyReport {
        e0: last.map_or(0.0, |r| r.e0),
        e1: last.map_or(0.0, |r| r.e1),
        d0: last.map_or(0.0, |r| r.d0),
        d1: last.map_or(0.0, |r| r.d1),
        e_in,
        breakdown: labels.into_iter().zip(acc).collect(),
        rows,
    })
}

impl EnergyReport {
    /// One row per state time; the instantaneous terms labelled by symbol,
    /// followed by the accumulated functionals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau");
        for l in E0_LABELS.iter().chain(&D0_LABELS).chain(&E1_LABELS).chain(&D1_LABELS) {
            out.push(',');
            out.push_str(l);
        }
        out.push_str(",E0,E1,D0,D1\n");
        for r in &self.rows {
            let _ = write!(out, "{:.16e}", r.tau);
            for v in r.terms.flat() {
                let _ = write!(out, ",{v:.16e}");
            }
            let _ = writeln!(out, ",{:.16e},{:.16e},{:.16e},{:.16e}", r.e0, r.e1, r.d0, r.d1);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QField {
    /// `q` on valid nodes, NaN elsewhere.
    pub q: Vec<f64>,
    pub valid: Vec<bool>,
    /// `sup |q|` over valid nodes with `x > ε₀`.
    pub sup_interior: f64,
    /// `sup |q|` over all valid nodes.
    pub sup_global: f64,
}

/// Relative pressure cut-off: nodes with `p̄ ≤ 10⁻⁶ p̄(0)` carry no usable
/// `q = ζ / (p̄ W)`.
pub const Q_PRESSURE_FLOOR: f64 = 1e-6;

pub fn q_field(state: &PerturbationState, grid: &UniformGrid, p_bar: &[f64], gamma: f64, eps0: f64) -> QField {
    let jac = jacobian(&state.eta, grid);
    let w = volume_power(&state.eta, &jac, gamma);
    let floor = Q_PRESSURE_FLOOR * p_bar[0];
    let x = grid.nodes();
    let mut q = vec![f64::NAN; x.len()];
    let mut valid = vec![false; x.len()];
    let (mut sup_interior, mut sup_global) = (0.0_f64, 0.0_f64);
    for i in 0..x.len() {
        if p_bar[i] > floor {
            let v = state.zeta[i] / (p_bar[i] * w[i]);
            q[i] = v;
            valid[i] = true;
            sup_global = sup_global.max(v.abs());
            if x[i] > eps0 {
                sup_interior = sup_interior.max(v.abs());
            }
        }
    }
    QField { q, valid, sup_interior, sup_global }
}

/// Nodal change of `Z = (1+q)W` between two states, on nodes where `p̄ > 0`.
pub fn entropy_increments(
    prev: &PerturbationState,
    next: &PerturbationState,
    grid: &UniformGrid,
    p_bar: &[f64],
    gamma: f64,
) -> Vec<f64> {
    let a = entropy_z(prev, grid, p_bar, gamma);
    let b = entropy_z(next, grid, p_bar, gamma);
    a.iter()
        .zip(&b)
        .zip(p_bar)
        .filter(|(_, p)| **p > 0.0)
        .map(|((a, b), _)| b - a)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyMonitor {
    pub min_increment: f64,
    pub violations: usize,
}

/// Scans the per-step minimum increments of `Z` recorded in a run series.
pub fn entropy_monitor(series: &[SeriesRow], tol: f64) -> EntropyMonitor {
    let mut min_increment = 0.0_f64;
    let mut violations = 0;
    for row in series.iter().skip(1) {
        if row.z_min_increment.is_finite() {
            min_increment = min_increment.min(row.z_min_increment);
        }
        if row.z_min_increment < -tol {
            violations += 1;
        }
    }
    EntropyMonitor { min_increment, violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayQuantity {
    EtaTau,
    XEtaXTau,
    FrakB,
}

impl DecayQuantity {
    pub const ALL: [DecayQuantity; 3] = [DecayQuantity::EtaTau, DecayQuantity::XEtaXTau, DecayQuantity::FrakB];

    pub fn as_str(self) -> &'static str {
        match self {
            DecayQuantity::EtaTau => "eta_tau",
            DecayQuantity::XEtaXTau => "x_eta_x_tau",
            DecayQuantity::FrakB => "B",
        }
    }

    fn value(self, row: &SeriesRow) -> f64 {
        match self {
            DecayQuantity::EtaTau => row.sup_etatau,
            DecayQuantity::XEtaXTau => row.sup_xetaxtau,
            DecayQuantity::FrakB => row.sup_b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub quantity: DecayQuantity,
    pub fitted_exponent: f64,
    /// Decay rate the theory predicts: `σ₁` for the velocity norms, 1 for `𝔅`.
    pub target: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
}

/// Fraction of the series, counted from the end, used for the decay fits.
pub const DECAY_WINDOW: f64 = 0.6;

/// Least-squares slope of `log sup|·|` against `log α` over the last 60% of
/// the series rows.
pub fn decay_fit(series: &[SeriesRow], quantity: DecayQuantity, target: f64) -> Result<DecayFit> {
    if series.len() < 3 {
        return Err(Error::InsufficientWindow("fewer than three series rows".into()));
    }
    let start = ((1.0 - DECAY_WINDOW) * series.len() as f64).floor() as usize;
    let tail = &series[start.min(series.len() - 2)..];
    let mut lx = Vec::with_capacity(tail.len());
    let mut ly = Vec::with_capacity(tail.len());
    for row in tail {
        let v = quantity.value(row);
        if !(v > 0.0) || !v.is_finite() || !(row.alpha > 0.0) {
            return Err(Error::InsufficientWindow(format!(
                "{} is {v} at tau = {}; log-fit undefined",
                quantity.as_str(),
                row.tau
            )));
        }
        lx.push(row.alpha.ln());
        ly.push(v.ln());
    }
    let span = lx[lx.len() - 1] - lx[0];
    if span < 2.0 {
        return Err(Error::InsufficientWindow(format!(
            "alpha grows by only {span:.3} e-folds over the fit window"
        )));
    }
    let (_, slope, r2) = linear_fit(&lx, &ly)
        .ok_or_else(|| Error::InsufficientWindow("degenerate regression".into()))?;
    Ok(DecayFit {
        quantity,
        fitted_exponent: slope,
        target,
        window: (tail[0].tau, tail[tail.len() - 1].tau),
        r_squared: r2,
    })
}

/// Fits for `η_τ`, `xη_xτ` (target `σ₁`) and `𝔅` (target 1).
pub fn decay_fits(series: &[SeriesRow], set: &IndexSet) -> Result<Vec<DecayFit>> {
    DecayQuantity::ALL
        .iter()
        .map(|&q| {
            let target = if q == DecayQuantity::FrakB { 1.0 } else { set.sigma1 };
            decay_fit(series, q, target)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeEntropy {
    /// `𝔥 = log((1+η)² J)` at the nodes.
    pub h: Vec<f64>,
    /// `∫ 𝔥_x²`.
    pub h_x_norm: f64,
    /// `∫ 𝔥_xτ²`.
    pub h_xtau_norm: f64,
    /// `∫ (η_x² + x²η_xx²) / ∫ 𝔥_x²`.
    pub ratio: f64,
    /// `∫ (η_xτ² + x²η_xxτ²) / ∫ 𝔥_xτ²`.
    pub ratio_tau: f64,
}

pub fn relative_entropy(eta: &[f64], v: &[f64], grid: &UniformGrid) -> Result<RelativeEntropy> {
    let h = grid.spacing();
    let x = grid.nodes();
    let jac = jacobian(eta, grid);
    let mut hv = Vec::with_capacity(eta.len());
    for i in 0..eta.len() {
        let arg = (1.0 + eta[i]).powi(2) * jac[i];
        if !(arg > 0.0) || !(1.0 + eta[i] > 0.0) {
            return Err(Error::Degenerate { tau: f64::NAN, x: x[i], what: "(1+eta)^2 J", value: arg });
        }
        hv.push(arg.ln());
    }
    let vx = derivative_even(v, h);
    let h_tau: Vec<f64> = (0..eta.len())
        .map(|i| 2.0 * v[i] / (1.0 + eta[i]) + (v[i] + x[i] * vx[i]) / jac[i])
        .collect();
    let hx = derivative_even(&hv, h);
    let hxt = derivative_even(&h_tau, h);
    let sq = |f: &[f64]| trapezoid(&f.iter().map(|v| v * v).collect::<Vec<_>>(), h);
    let h_x_norm = sq(&hx);
    let h_xtau_norm = sq(&hxt);
    let h1 = |f: &[f64]| {
        let d = derivative_even(f, h);
        let dd = second_derivative_even(f, h);
        trapezoid(
            &(0..f.len()).map(|i| d[i] * d[i] + x[i] * x[i] * dd[i] * dd[i]).collect::<Vec<_>>(),
            h,
        )
    };
    Ok(RelativeEntropy {
        ratio: h1(eta) / h_x_norm,
        ratio_tau: h1(v) / h_xtau_norm,
        h: hv,
        h_x_norm,
        h_xtau_norm,
    })
}

/// Largest `|x η_x|` at the nodes; shared by the series and CLI summaries.
pub fn sup_x_derivative(f: &[f64], grid: &UniformGrid) -> f64 {
    let d = derivative_even(f, grid.spacing());
    let xd: Vec<f64> = grid.nodes().iter().zip(&d).map(|(x, d)| x * d).collect();
    sup_abs(&xd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{build_density_profile, pressure_profile, DensityKind};
    use crate::solver::SolverConfig;
    use proptest::prelude::*;

    fn solver(n: usize) -> Solver {
        let cfg = {
            let mut c = SolverConfig::new(1.5, 1.0, 1.0, 1.0, 2.0, 0.1);
            c.n = n;
            c
        };
        let p = build_density_profile(DensityKind::Power, 2.0, 1.0, 1.5, n).unwrap();
        let pr = pressure_profile(&p, 1.0).unwrap();
        Solver::new(cfg, &p, &pr).unwrap()
    }

    fn set() -> IndexSet {
        IndexSet::compute(1.5, 1.8, 0.875).unwrap()
    }

    #[test]
    fn chi_examples_and_slope_bound() {
        assert_eq!(chi_cutoff(0.3), 1.0);
        assert_eq!(chi_cutoff(0.9), 0.0);
        assert!((chi_cutoff(0.625) - 0.5).abs() < 1e-15);
        assert!((chi_derivative(0.625) + 6.0).abs() < 1e-12);
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let d = chi_derivative(x);
            assert!((-6.0..=0.0).contains(&d));
        }
    }

    #[test]
    fn zero_states_give_zero_report() {
        let s = solver(32);
        let st = PerturbationState::zero(32, 1.0, 2.0);
        let mut st2 = st.clone();
        st2.tau = 0.1;
        st2.alpha = 1.3;
        let r = energy_report(&[st, st2], &s, &set(), 0.0).unwrap();
        assert_eq!((r.e0, r.e1, r.d0, r.d1), (0.0, 0.0, 0.0, 0.0));
        assert!(r.breakdown.iter().all(|(_, v)| *v == 0.0));
        assert_eq!(r.breakdown.len(), 19);
    }

    #[test]
    fn infeasible_index_set_is_refused() {
        let s = solver(32);
        let bad = IndexSet::compute(1.5, 1.8, 0.05).unwrap();
        let st = PerturbationState::zero(32, 1.0, 2.0);
        assert!(matches!(energy_report(&[st], &s, &bad, 0.0), Err(Error::IndexSetInfeasible)));
    }

    /// `η_τ = α^{−r₁/2} x` makes the first E0 term `∫ x⁶ ρ̄` for any α; with
    /// ρ̄ = (1−x)², `∫₀¹ x⁶(1−x)² = 1/252`.
    #[test]
    fn first_energy_term_weight_wiring() {
        let s = solver(512);
        let set = set();
        for alpha in [1.0, 3.0, 40.0] {
            let mut st = PerturbationState::zero(512, alpha, 2.0 * alpha);
            st.v = s.grid().nodes().iter().map(|x| alpha.powf(-set.r1 / 2.0) * x).collect();
            let t = instantaneous_terms(&st, s.grid(), s.rho_bar(), s.p_bar(), 1.5, 1.0, &set);
            assert!((t.e0[0] - 1.0 / 252.0).abs() < 1e-5, "{}", t.e0[0]);
            // d0[0] carries the extra α_τ/α factor, here 2.
            assert!((t.d0[0] - 2.0 / 252.0).abs() < 2e-5);
        }
    }

    /// ζ = c·α^{l1/2} gives `α^{−l1}‖xζ‖² = c²/3`, and the interior term
    /// `α^{−l3}‖χ^{1/2}ζ‖² = c² α^{l1−l3} ∫χ = c² α^{−2}·(1/2 + 1/8)`.
    #[test]
    fn zeta_energy_weight_wiring() {
        let s = solver(512);
        let set = set();
        let alpha = 5.0;
        let c = 0.01;
        let mut st = PerturbationState::zero(512, alpha, alpha);
        st.zeta = vec![c * alpha.powf(set.l1 / 2.0); 513];
        let t = instantaneous_terms(&st, s.grid(), s.rho_bar(), s.p_bar(), 1.5, 1.0, &set);
        assert!((t.e0[1] - c * c / 3.0).abs() < 1e-9);
        assert!((t.e1[0] - c * c * alpha.powi(-2) * 0.625).abs() < 1e-9);
        assert!((t.d0[4] - t.e0[1]).abs() < 1e-12);
    }

    #[test]
    fn eta_energy_is_unweighted() {
        let s = solver(256);
        let mut st = PerturbationState::zero(256, 7.0, 1.0);
        st.eta = vec![0.01; 257];
        let t = instantaneous_terms(&st, s.grid(), s.rho_bar(), s.p_bar(), 1.5, 1.0, &set());
        // 1e-4 · ∫x⁴(1−x)² = 1e-4 / 105
        assert!((t.e0[4] - 1e-4 / 105.0).abs() < 1e-9);
    }

    #[test]
    fn q_field_inverts_initial_data() {
        let mut cfg = SolverConfig::new(1.5, 1.0, 1.0, 1.0, 2.0, 0.1);
        cfg.n = 64;
        cfg.a_q = 0.02;
        cfg.a_eta = 0.01;
        let p = build_density_profile(DensityKind::Power, 2.0, 1.0, 1.5, 64).unwrap();
        let pr = pressure_profile(&p, 1.0).unwrap();
        let s = Solver::new(cfg, &p, &pr).unwrap();
        let (st, init) = s.initialize().unwrap();
        let q = q_field(&st, s.grid(), s.p_bar(), 1.5, 0.1);
        for i in 0..=64 {
            if q.valid[i] {
                assert!((q.q[i] - init.q0[i]).abs() < 1e-14);
            }
        }
        assert!(!q.valid[64]);
        assert!((q.sup_global - 0.02).abs() < 1e-14);
        let zero = PerturbationState::zero(64, 1.0, 1.0);
        assert_eq!(q_field(&zero, s.grid(), s.p_bar(), 1.5, 0.1).sup_global, 0.0);
    }

    fn synthetic_series(exponent: f64) -> Vec<SeriesRow> {
        (0..100)
            .map(|k| {
                let tau = k as f64 * 0.05;
                let alpha = (2.0 * tau).exp();
                SeriesRow::from_values([
                    tau, alpha, 2.0 * alpha, 0.0, 0.0,
                    alpha.powf(exponent), alpha.powf(exponent), alpha.powf(-1.2),
                    0.0, 0.0, 0.0, 0.0, 0.0,
                ])
            })
            .collect()
    }

    #[test]
    fn decay_fit_recovers_exact_power() {
        let fit = decay_fit(&synthetic_series(-0.6), DecayQuantity::EtaTau, 0.875).unwrap();
        assert!((fit.fitted_exponent + 0.6).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let fits = decay_fits(&synthetic_series(-0.6), &set()).unwrap();
        assert!((fits[2].fitted_exponent + 1.2).abs() < 1e-12);
        assert_eq!(fits[2].target, 1.0);
    }

    #[test]
    fn decay_fit_rejects_zero_and_short_runs() {
        let mut zero = synthetic_series(-0.6);
        for r in &mut zero {
            r.sup_etatau = 0.0;
        }
        assert!(matches!(decay_fit(&zero, DecayQuantity::EtaTau, 1.0), Err(Error::InsufficientWindow(_))));
        let short: Vec<SeriesRow> = synthetic_series(-0.6).into_iter().take(10).collect();
        assert!(decay_fit(&short, DecayQuantity::EtaTau, 1.0).is_err());
    }

    #[test]
    fn relative_entropy_examples() {
        let g = UniformGrid::new(64);
        let zero = vec![0.0; 65];
        let r = relative_entropy(&zero, &zero, &g).unwrap();
        assert!(r.h.iter().all(|h| *h == 0.0));
        let c = vec![0.05; 65];
        let r = relative_entropy(&c, &zero, &g).unwrap();
        for h in &r.h {
            assert!((h - 3.0 * 1.05_f64.ln()).abs() < 1e-14);
        }
        assert!(r.h_x_norm < 1e-28);
    }

    #[test]
    fn relative_entropy_ratio_is_stable_under_refinement() {
        let ratio = |n: usize| {
            let g = UniformGrid::new(n);
            let eta: Vec<f64> = g.nodes().iter().map(|x| 0.01 * (x * x * (3.0 - 2.0 * x) + 0.3 * (3.0 * x).cos())).collect();
            relative_entropy(&eta, &vec![0.0; n + 1], &g).unwrap().ratio
        };
        let (a, b) = (ratio(128), ratio(256));
        assert!(a.is_finite() && b.is_finite());
        assert!(((a - b) / b).abs() < 0.02);
    }

    #[test]
    fn entropy_monitor_counts_violations() {
        let mut s = synthetic_series(-1.0);
        s[5].z_min_increment = -1e-8;
        s[6].z_min_increment = 1e-3;
        let m = entropy_monitor(&s, 1e-10);
        assert_eq!(m.violations, 1);
        assert_eq!(m.min_increment, -1e-8);
    }

    proptest! {
        #[test]
        fn chi_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(chi_cutoff(lo) >= chi_cutoff(hi));
            prop_assert!((0.0..=1.0).contains(&chi_cutoff(a)));
        }
    }
}
