//! Semi-implicit evolution of the perturbation `(η, ζ)` of the self-similar
//! solution in rescaled time.
//!
//! With `w = η_τ / (1+η)` and `J = 1 + η + xη_x` the momentum equation,
//! multiplied by `x³(1+η)³`, reads
//!
//! ```text
//! x⁴ρ̄(1+η)(α η_ττ + α_τ η_τ) − α^{4−3γ} δ x⁴ρ̄ η(1+η)² + α^{4−3γ} x³(1+η)³ Q_x
//!     = ∂_x [ (4/3)μα³ x⁴(1+η)⁴ w_x / J ],        Q = ζ / [J(1+η)²]^γ,
//! ```
//!
//! because `𝔅 = x(1+η)w_x / J`. The viscous part is a zero-flux diffusion in
//! `w` whose null space is exactly the constants (the rigid dilations), and
//! `𝔅(1) = 0` is the vanishing of that flux at the surface. Each step solves
//! one symmetric tridiagonal M-matrix system for `w` with the viscous
//! coefficient frozen at the old `η`; pressure and gravity are explicit.
//!
//! The energy equation is advanced in the form
//! `ζⁿ⁺¹ = ζⁿ − p̄ (Wⁿ⁺¹ − Wⁿ) + dτ (Sⁿ + Sⁿ⁺¹)/2` with `W = [J(1+η)²]^γ` and
//! `S = (4/3)μ(γ−1)α^{3γ−1} W 𝔅² ≥ 0`, which makes `Z = ζ/p̄ + W` increase by
//! exactly `dτ·S̄/p̄` per step and leaves `ζ = 0` wherever `p̄ = 0`.

use crate::diagnostics::{chi_cutoff, instantaneous_terms};
use crate::error::{Error, Result};
use crate::indices::IndexSet;
use crate::numerics::{derivative_even, solve_zero_flux_tridiagonal, sup_abs, trapezoid, trapezoid_range, UniformGrid};
use crate::profiles::{DensityProfile, PressureProfile};
use crate::selfsim::{AlphaStepper, SelfSimParams};

/// Safety factor on the explicit stability bound.
pub const C_CFL: f64 = 0.5;
/// Probe points for the integrated momentum identities.
pub const PROBES: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub gamma: f64,
    pub mu: f64,
    pub delta: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub n: usize,
    pub dtau: f64,
    pub tau_end: f64,
    pub a_eta: f64,
    pub a_v: f64,
    pub a_q: f64,
    /// Exponent `m` of the initial shape `x^m((m+1) − m x)`.
    pub shape: u32,
    pub omega: f64,
    pub eps_det: f64,
    pub snapshot_every: usize,
}

impl SolverConfig {
    pub fn new(gamma: f64, mu: f64, delta: f64, alpha0: f64, alpha1: f64, tau_end: f64) -> Self {
        Self {
            gamma,
            mu,
            delta,
            alpha0,
            alpha1,
            n: 256,
            dtau: 1e-3,
            tau_end,
            a_eta: 0.0,
            a_v: 0.0,
            a_q: 0.0,
            shape: 2,
            omega: 0.5,
            eps_det: 1e-3,
            snapshot_every: 100,
        }
    }

    pub fn selfsim(&self) -> SelfSimParams {
        SelfSimParams {
            delta: self.delta,
            gamma: self.gamma,
            alpha0: self.alpha0,
            alpha1: self.alpha1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.selfsim().validate()?;
        let checks: [(bool, &str); 9] = [
            (self.mu > 0.0 && self.mu.is_finite(), "mu must be positive"),
            (self.n >= 32, "N must be at least 32"),
            (self.dtau > 0.0 && self.dtau.is_finite(), "dtau must be positive"),
            (self.tau_end > 0.0 && self.tau_end.is_finite(), "tau_end must be positive"),
            (
                [self.a_eta, self.a_v, self.a_q].iter().all(|a| a.abs() < 1.0),
                "perturbation amplitudes must be below 1 in magnitude",
            ),
            (self.shape >= 2, "shape exponent must be at least 2"),
            (self.omega > 0.0 && self.omega < 1.0, "omega must lie in (0, 1)"),
            (self.eps_det > 0.0 && self.eps_det < 1.0, "eps_det must lie in (0, 1)"),
            (self.snapshot_every >= 1, "snapshot_every must be at least 1"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::invalid(*msg)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationState {
    pub step: usize,
    pub tau: f64,
    pub alpha: f64,
    pub alpha_tau: f64,
    pub eta: Vec<f64>,
    /// `η_τ`.
    pub v: Vec<f64>,
    pub zeta: Vec<f64>,
    /// `η_ττ` estimated by the last step's change in `v`.
    pub accel: Vec<f64>,
}

impl PerturbationState {
    pub fn zero(n: usize, alpha: f64, alpha_tau: f64) -> Self {
        Self {
            step: 0,
            tau: 0.0,
            alpha,
            alpha_tau,
            eta: vec![0.0; n + 1],
            v: vec![0.0; n + 1],
            zeta: vec![0.0; n + 1],
            accel: vec![0.0; n + 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub eta0: Vec<f64>,
    pub eta1: Vec<f64>,
    pub q0: Vec<f64>,
    pub zeta0: Vec<f64>,
    pub zeta1: Vec<f64>,
    /// `η_ττ(0)` from one implicit micro-step.
    pub eta2: Vec<f64>,
    /// `η_ττ(0)` solved directly from the momentum equation where `xρ̄` is
    /// not too small to divide by.
    pub eta2_direct: Vec<Option<f64>>,
    pub e_in: f64,
    pub e_in_terms: Vec<(&'static str, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    AbortedDegenerate,
    AbortedNan,
    AbortedStability,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::AbortedDegenerate => "aborted_degenerate",
            RunStatus::AbortedNan => "aborted_nan",
            RunStatus::AbortedStability => "aborted_stability",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            RunStatus::Completed,
            RunStatus::AbortedDegenerate,
            RunStatus::AbortedNan,
            RunStatus::AbortedStability,
        ]
        .into_iter()
        .find(|st| st.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub tau: f64,
    pub alpha: f64,
    pub alpha_tau: f64,
    pub sup_eta: f64,
    pub sup_xetax: f64,
    pub sup_etatau: f64,
    pub sup_xetaxtau: f64,
    pub sup_b: f64,
    /// Smallest nodal change of `Z` over the step (0 on the first row).
    pub z_min_increment: f64,
    pub e0: f64,
    pub e1: f64,
    pub d0: f64,
    pub d1: f64,
}

pub const SERIES_HEADER: &str =
    "tau,alpha,alpha_tau,sup_eta,sup_xetax,sup_etatau,sup_xetaxtau,sup_B,Z_min_increment,E0,E1,D0,D1";

impl SeriesRow {
    pub fn values(&self) -> [f64; 13] {
        [
            self.tau,
            self.alpha,
            self.alpha_tau,
            self.sup_eta,
            self.sup_xetax,
            self.sup_etatau,
            self.sup_xetaxtau,
            self.sup_b,
            self.z_min_increment,
            self.e0,
            self.e1,
            self.d0,
            self.d1,
        ]
    }

    pub fn from_values(v: [f64; 13]) -> Self {
        Self {
            tau: v[0],
            alpha: v[1],
            alpha_tau: v[2],
            sup_eta: v[3],
            sup_xetax: v[4],
            sup_etatau: v[5],
            sup_xetaxtau: v[6],
            sup_b: v[7],
            z_min_increment: v[8],
            e0: v[9],
            e1: v[10],
            d0: v[11],
            d1: v[12],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub initial: InitialData,
    /// States at step 0, every `snapshot_every` steps, and the last good step.
    pub snapshots: Vec<PerturbationState>,
    /// One row per step, starting with step 0.
    pub series: Vec<SeriesRow>,
    pub status: RunStatus,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResiduals {
    /// Mismatch of the momentum equation weighted by `x³(1+η)³` and
    /// integrated over `(0, x)`.
    pub res_103: f64,
    /// Mismatch of the momentum equation integrated over `(x, 1)`, with the
    /// viscous side written through `𝔅 + 3w`.
    pub res_105: f64,
    /// Same as `res_105` with the viscous side written through the original
    /// bracket `(η_τ + xη_xτ)/J + 2η_τ/(1+η)`.
    pub res_105_bracket: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EulerianFields {
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub rho: Vec<f64>,
    pub p: Vec<f64>,
    /// Trapezoid rule of `r² ρ r_x` over the Lagrangian grid.
    pub mass: f64,
    /// Trapezoid rule of `x² ρ̄`.
    pub reference_mass: f64,
}

/// `1 + η + xη_x` at the nodes.
pub fn jacobian(eta: &[f64], grid: &UniformGrid) -> Vec<f64> {
    let ex = derivative_even(eta, grid.spacing());
    grid.nodes()
        .iter()
        .zip(eta.iter().zip(&ex))
        .map(|(x, (e, d))| 1.0 + e + x * d)
        .collect()
}

/// `W = [J (1+η)²]^γ`.
pub fn volume_power(eta: &[f64], jac: &[f64], gamma: f64) -> Vec<f64> {
    eta.iter()
        .zip(jac)
        .map(|(e, j)| (j * (1.0 + e) * (1.0 + e)).powf(gamma))
        .collect()
}

/// `𝔅 = (η_τ + xη_xτ)/J − η_τ/(1+η)` at the nodes, evaluated as
/// `x(1+η) w_x / J` with `w = η_τ/(1+η)`. Zero at the center by symmetry
/// and at the surface by the boundary condition.
pub fn frak_b(eta: &[f64], v: &[f64], grid: &UniformGrid) -> Vec<f64> {
    let n = grid.intervals();
    let h = grid.spacing();
    let x = grid.nodes();
    let jac = jacobian(eta, grid);
    let w: Vec<f64> = v.iter().zip(eta).map(|(v, e)| v / (1.0 + e)).collect();
    let mut b = vec![0.0; n + 1];
    for i in 1..n {
        let wx = (w[i + 1] - w[i - 1]) / (2.0 * h);
        b[i] = x[i] * (1.0 + eta[i]) * wx / jac[i];
    }
    b
}

/// `∂_τ W` for given `η` and `η_τ`.
pub fn volume_power_rate(eta: &[f64], v: &[f64], grid: &UniformGrid, gamma: f64) -> Vec<f64> {
    let jac = jacobian(eta, grid);
    let vx = derivative_even(v, grid.spacing());
    let x = grid.nodes();
    (0..eta.len())
        .map(|i| {
            let a = 1.0 + eta[i];
            let j = jac[i];
            gamma * j.powf(gamma - 1.0) * a.powf(2.0 * gamma) * (v[i] + x[i] * vx[i])
                + 2.0 * gamma * j.powf(gamma) * a.powf(2.0 * gamma - 1.0) * v[i]
        })
        .collect()
}

/// Viscous heating `S = (4/3)μ(γ−1)α^{3γ−1} W 𝔅²`.
pub fn entropy_source(state: &PerturbationState, grid: &UniformGrid, gamma: f64, mu: f64) -> Vec<f64> {
    let jac = jacobian(&state.eta, grid);
    let w = volume_power(&state.eta, &jac, gamma);
    let b = frak_b(&state.eta, &state.v, grid);
    let c = 4.0 / 3.0 * mu * (gamma - 1.0) * state.alpha.powf(3.0 * gamma - 1.0);
    w.iter().zip(&b).map(|(w, b)| c * w * b * b).collect()
}

/// `ζ_τ` from the energy equation (no time differencing).
pub fn zeta_tau(state: &PerturbationState, grid: &UniformGrid, p_bar: &[f64], gamma: f64, mu: f64) -> Vec<f64> {
    let wt = volume_power_rate(&state.eta, &state.v, grid, gamma);
    let s = entropy_source(state, grid, gamma, mu);
    p_bar.iter().zip(wt.iter().zip(&s)).map(|(p, (wt, s))| s - p * wt).collect()
}

/// `Z = (1+q)W = ζ/p̄ + W` where `p̄ > 0`, and `W` where `p̄ = 0`.
pub fn entropy_z(state: &PerturbationState, grid: &UniformGrid, p_bar: &[f64], gamma: f64) -> Vec<f64> {
    let jac = jacobian(&state.eta, grid);
    let w = volume_power(&state.eta, &jac, gamma);
    p_bar
        .iter()
        .zip(w.iter().zip(&state.zeta))
        .map(|(p, (w, z))| if *p > 0.0 { z / p + w } else { *w })
        .collect()
}

/// Initial shape `φ(x) = x^m((m+1) − m x)`: `φ(0) = φ'(0) = 0`, `φ(1) = 1`,
/// nondecreasing on `[0, 1]`.
pub fn shape_function(m: u32, x: f64) -> f64 {
    let mf = m as f64;
    x.powi(m as i32) * ((mf + 1.0) - mf * x)
}

/// `sup |x φ'(x)| = m (m/(m+1))^m`, attained at `x = m/(m+1)`.
pub fn shape_sup_x_derivative(m: u32) -> f64 {
    let mf = m as f64;
    mf * (mf / (mf + 1.0)).powi(m as i32)
}

pub struct Solver {
    config: SolverConfig,
    grid: UniformGrid,
    rho_bar: Vec<f64>,
    p_bar: Vec<f64>,
    /// `∫_cell x⁴ ρ̄`.
    m4rho: Vec<f64>,
    /// `∫_cell x³`.
    m3: Vec<f64>,
}

impl Solver {
    pub fn new(config: SolverConfig, profile: &DensityProfile, pressure: &PressureProfile) -> Result<Self> {
        config.validate()?;
        if profile.grid.intervals() != config.n {
            return Err(Error::GridMismatch(format!(
                "profile has {} intervals, config asks for {}",
                profile.grid.intervals(),
                config.n
            )));
        }
        if pressure.p_bar.len() != profile.rho_bar.len() {
            return Err(Error::GridMismatch(format!(
                "pressure has {} nodes, density has {}",
                pressure.p_bar.len(),
                profile.rho_bar.len()
            )));
        }
        if (pressure.delta - config.delta).abs() > 1e-14 * config.delta {
            return Err(Error::invalid("pressure profile was built with a different delta"));
        }
        let grid = profile.grid.clone();
        Ok(Self {
            m4rho: grid.weighted_cell_moments(4, &profile.rho_bar),
            m3: grid.cell_moments(3),
            rho_bar: profile.rho_bar.clone(),
            p_bar: pressure.p_bar.clone(),
            grid,
            config,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn rho_bar(&self) -> &[f64] {
        &self.rho_bar
    }

    pub fn p_bar(&self) -> &[f64] {
        &self.p_bar
    }

    /// Largest `dτ` the explicit pressure and gravity terms tolerate.
    pub fn stability_bound(&self, state: &PerturbationState) -> f64 {
        let c = &self.config;
        let vmax = sup_abs(&state.v);
        let transport = if vmax > 0.0 {
            self.grid.spacing() / vmax
        } else {
            f64::INFINITY
        };
        let forcing = state.alpha.powf(3.0 * c.gamma - 4.0) / (c.delta + 1.0);
        C_CFL * transport.min(forcing)
    }

    fn check_nondegenerate(&self, eta: &[f64], tau: f64) -> Result<()> {
        let eps = self.config.eps_det;
        let x = self.grid.nodes();
        let jac = jacobian(eta, &self.grid);
        for i in 0..eta.len() {
            if !(1.0 + eta[i] >= eps) {
                return Err(Error::Degenerate { tau, x: x[i], what: "1+eta", value: 1.0 + eta[i] });
            }
            if !(jac[i] >= eps) {
                return Err(Error::Degenerate { tau, x: x[i], what: "1+eta+x*eta_x", value: jac[i] });
            }
        }
        Ok(())
    }

    /// Viscous operator `(4/3)μα³ [∂_x (x⁴(1+η)⁴ w_x / J)]` integrated over
    /// each dual cell, with `w = v/(1+η)`; linear in `v`.
    pub fn viscous_apply(&self, eta: &[f64], v: &[f64], alpha: f64) -> Vec<f64> {
        let k = self.conductance(eta, alpha);
        let w: Vec<f64> = v.iter().zip(eta).map(|(v, e)| v / (1.0 + e)).collect();
        let n = self.grid.intervals();
        let mut out = vec![0.0; n + 1];
        for i in 0..n {
            let flux = k[i] * (w[i + 1] - w[i]);
            out[i] += flux;
            out[i + 1] -= flux;
        }
        out
    }

    fn conductance(&self, eta: &[f64], alpha: f64) -> Vec<f64> {
        let c = &self.config;
        let h = self.grid.spacing();
        let xm = self.grid.midpoints();
        let coeff = 4.0 / 3.0 * c.mu * alpha.powi(3);
        (0..self.grid.intervals())
            .map(|i| {
                let em = 0.5 * (eta[i] + eta[i + 1]);
                let jm = 1.0 + em + xm[i] * (eta[i + 1] - eta[i]) / h;
                let a = 1.0 + em;
                coeff * xm[i].powi(4) * (a * a) * (a * a) / (jm * h)
            })
            .collect()
    }

    /// One semi-implicit step of length `dtau`.
    pub fn step(&self, state: &PerturbationState, dtau: f64) -> Result<PerturbationState> {
        let c = &self.config;
        let bound = self.stability_bound(state);
        if !(dtau > 0.0) || dtau > bound {
            return Err(Error::StabilityBound { tau: state.tau, dtau, bound });
        }
        let mut alpha = AlphaStepper::at(c.selfsim(), state.tau, state.alpha, state.alpha_tau)?;
        alpha.advance(dtau)?;
        let (a1, at1) = (alpha.alpha, alpha.alpha_tau);
        let tau = state.tau + dtau;

        let eta = &state.eta;
        let jac = jacobian(eta, &self.grid);
        let wpow = volume_power(eta, &jac, c.gamma);
        let q: Vec<f64> = state.zeta.iter().zip(&wpow).map(|(z, w)| z / w).collect();
        let qx = derivative_even(&q, self.grid.spacing());
        let forcing = a1.powf(4.0 - 3.0 * c.gamma);

        let n1 = eta.len();
        let mut mass = vec![0.0; n1];
        let mut rhs = vec![0.0; n1];
        for i in 0..n1 {
            let a = 1.0 + eta[i];
            mass[i] = a1 / dtau * self.m4rho[i] * a * a;
            let gravity = c.delta * self.m4rho[i] * eta[i] * a * a;
            let pressure = self.m3[i] * a * a * a * qx[i];
            rhs[i] = self.m4rho[i] * a * (a1 / dtau - at1) * state.v[i] + forcing * (gravity - pressure);
        }
        let k = self.conductance(eta, a1);
        let w = solve_zero_flux_tridiagonal(&k, &mass, &rhs)?;

        let v_new: Vec<f64> = w.iter().zip(eta).map(|(w, e)| (1.0 + e) * w).collect();
        let eta_new: Vec<f64> = eta.iter().zip(&v_new).map(|(e, v)| e + dtau * v).collect();
        if v_new.iter().chain(&eta_new).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { tau, field: "eta" });
        }
        self.check_nondegenerate(&eta_new, tau)?;

        let accel: Vec<f64> = v_new.iter().zip(&state.v).map(|(a, b)| (a - b) / dtau).collect();
        let mut next = PerturbationState {
            step: state.step + 1,
            tau,
            alpha: a1,
            alpha_tau: at1,
            eta: eta_new,
            v: v_new,
            zeta: Vec::new(),
            accel,
        };
        let jac_new = jacobian(&next.eta, &self.grid);
        let wpow_new = volume_power(&next.eta, &jac_new, c.gamma);
        let s_old = entropy_source(state, &self.grid, c.gamma, c.mu);
        let s_new = entropy_source(&next, &self.grid, c.gamma, c.mu);
        let mut zeta: Vec<f64> = (0..n1)
            .map(|i| {
                state.zeta[i] - self.p_bar[i] * (wpow_new[i] - wpow[i]) + 0.5 * dtau * (s_old[i] + s_new[i])
            })
            .collect();
        zeta[n1 - 1] = 0.0;
        if zeta.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite { tau, field: "zeta" });
        }
        next.zeta = zeta;
        Ok(next)
    }

    /// Builds the initial state and the initial-data summary.
    pub fn initialize(&self) -> Result<(PerturbationState, InitialData)> {
        let c = &self.config;
        let m = c.shape;
        let sup_xd = shape_sup_x_derivative(m);
        let bounds = [
            ("eta0", c.a_eta.abs()),
            ("x*eta0_x", c.a_eta.abs() * sup_xd),
            ("eta1", c.a_v.abs()),
            ("x*eta1_x", c.a_v.abs() * sup_xd),
            ("q0", c.a_q.abs()),
        ];
        for (quantity, value) in bounds {
            if value >= c.omega {
                return Err(Error::OmegaBound { quantity, value, omega: c.omega });
            }
        }
        let x = self.grid.nodes();
        let phi: Vec<f64> = x.iter().map(|&x| shape_function(m, x)).collect();
        let eta0: Vec<f64> = phi.iter().map(|p| c.a_eta * p).collect();
        let eta1: Vec<f64> = phi.iter().map(|p| c.a_v * p).collect();
        let q0: Vec<f64> = x.iter().map(|x| c.a_q * (1.0 - x * x)).collect();
        let jac0 = jacobian(&eta0, &self.grid);
        let w0 = volume_power(&eta0, &jac0, c.gamma);
        let zeta0: Vec<f64> = (0..x.len()).map(|i| self.p_bar[i] * q0[i] * w0[i]).collect();

        let mut state = PerturbationState {
            step: 0,
            tau: 0.0,
            alpha: c.alpha0,
            alpha_tau: c.alpha0 * c.alpha1,
            eta: eta0.clone(),
            v: eta1.clone(),
            zeta: zeta0.clone(),
            accel: vec![0.0; x.len()],
        };
        self.check_nondegenerate(&state.eta, 0.0)?;
        let zeta1 = zeta_tau(&state, &self.grid, &self.p_bar, c.gamma, c.mu);

        let micro = c.dtau / 100.0;
        let probe = self.step(&state, micro)?;
        let eta2: Vec<f64> = probe.v.iter().zip(&state.v).map(|(a, b)| (a - b) / micro).collect();
        state.accel = eta2.clone();
        let eta2_direct = self.eta2_direct(&state);

        let h = self.grid.spacing();
        let chi: Vec<f64> = x.iter().map(|&x| chi_cutoff(x)).collect();
        let quad = |f: &dyn Fn(usize) -> f64| trapezoid(&(0..x.len()).map(f).collect::<Vec<_>>(), h);
        let rho = &self.rho_bar;
        let e_in_terms = vec![
            ("norm(x2 rho12 eta1)^2", quad(&|i| x[i].powi(4) * rho[i] * eta1[i] * eta1[i])),
            ("norm(x zeta0)^2", quad(&|i| x[i] * x[i] * zeta0[i] * zeta0[i])),
            ("norm(x2 rho12 eta2)^2", quad(&|i| x[i].powi(4) * rho[i] * eta2[i] * eta2[i])),
            ("norm(x zeta1)^2", quad(&|i| x[i] * x[i] * zeta1[i] * zeta1[i])),
            ("norm(x2 rho12 eta0)^2", quad(&|i| x[i].powi(4) * rho[i] * eta0[i] * eta0[i])),
            ("norm(chi12 zeta0)^2", quad(&|i| chi[i] * zeta0[i] * zeta0[i])),
            ("norm(chi12 x rho12 eta2)^2", quad(&|i| chi[i] * x[i] * x[i] * rho[i] * eta2[i] * eta2[i])),
            ("norm(chi12 zeta1)^2", quad(&|i| chi[i] * zeta1[i] * zeta1[i])),
        ];
        let e_in = e_in_terms.iter().map(|(_, v)| v).sum();
        let initial = InitialData {
            eta0,
            eta1,
            q0,
            zeta0,
            zeta1,
            eta2,
            eta2_direct,
            e_in,
            e_in_terms,
        };
        Ok((state, initial))
    }

    /// Solves the momentum equation at `τ = 0` for `η_ττ` by division by the
    /// degenerate weight `xρ̄`, on nodes where `xρ̄ > 10⁻⁶`.
    fn eta2_direct(&self, state: &PerturbationState) -> Vec<Option<f64>> {
        let c = &self.config;
        let h = self.grid.spacing();
        let x = self.grid.nodes();
        let jac = jacobian(&state.eta, &self.grid);
        let wpow = volume_power(&state.eta, &jac, c.gamma);
        let q: Vec<f64> = state.zeta.iter().zip(&wpow).map(|(z, w)| z / w).collect();
        let qx = derivative_even(&q, h);
        let b = frak_b(&state.eta, &state.v, &self.grid);
        let visc: Vec<f64> = (0..x.len())
            .map(|i| b[i] + 3.0 * state.v[i] / (1.0 + state.eta[i]))
            .collect();
        let visc_x = derivative_even(&visc, h);
        let a0 = state.alpha;
        let forcing = a0.powf(4.0 - 3.0 * c.gamma);
        (0..x.len())
            .map(|i| {
                let weight = x[i] * self.rho_bar[i];
                if weight <= 1e-6 {
                    return None;
                }
                let a = 1.0 + state.eta[i];
                let rhs = forcing * c.delta * weight * state.eta[i] / a - forcing * qx[i]
                    + 4.0 / 3.0 * c.mu * a0.powi(3) * visc_x[i];
                Some(rhs * a * a / (weight * a0) - c.alpha1 * state.v[i])
            })
            .collect()
    }

    /// Runs to `tau_end`, recording a series row per step and periodic
    /// snapshots. A degenerate or non-finite step ends the run early with the
    /// last good state kept.
    pub fn run(&self, index: Option<&IndexSet>) -> Result<RunOutput> {
        let c = &self.config;
        let (mut state, initial) = self.initialize()?;
        let index = index.filter(|s| s.feasible());
        let mut energy = EnergyAccumulator::default();
        let mut series = vec![self.series_row(&state, 0.0, &mut energy, index, 0.0)];
        let mut snapshots = vec![state.clone()];
        let steps = ((c.tau_end / c.dtau) - 1e-9).ceil().max(1.0) as usize;
        let mut status = RunStatus::Completed;
        let mut message = None;
        let mut z_prev = entropy_z(&state, &self.grid, &self.p_bar, c.gamma);
        for k in 1..=steps {
            let target = if k == steps { c.tau_end } else { k as f64 * c.dtau };
            let dt = target - state.tau;
            let next = match self.step(&state, dt) {
                Ok(s) => s,
                Err(e) => {
                    status = match e {
                        Error::Degenerate { .. } => RunStatus::AbortedDegenerate,
                        Error::StabilityBound { .. } => RunStatus::AbortedStability,
                        Error::NonFinite { .. } | Error::LinearSolve(_) | Error::StepUnderflow { .. } => {
                            RunStatus::AbortedNan
                        }
                        other => return Err(other),
                    };
                    message = Some(e.to_string());
                    break;
                }
            };
            let z_next = entropy_z(&next, &self.grid, &self.p_bar, c.gamma);
            let dz = z_next
                .iter()
                .zip(&z_prev)
                .zip(&self.p_bar)
                .filter(|(_, p)| **p > 0.0)
                .map(|((a, b), _)| a - b)
                .fold(f64::INFINITY, f64::min);
            z_prev = z_next;
            series.push(self.series_row(&next, dt, &mut energy, index, dz));
            state = next;
            if k % c.snapshot_every == 0 {
                snapshots.push(state.clone());
            }
        }
        if snapshots.last().map(|s| s.step) != Some(state.step) {
            snapshots.push(state);
        }
        Ok(RunOutput {
            initial,
            snapshots,
            series,
            status,
            message,
        })
    }

    fn series_row(
        &self,
        state: &PerturbationState,
        dt: f64,
        energy: &mut EnergyAccumulator,
        index: Option<&IndexSet>,
        dz: f64,
    ) -> SeriesRow {
        let h = self.grid.spacing();
        let x = self.grid.nodes();
        let ex = derivative_even(&state.eta, h);
        let vx = derivative_even(&state.v, h);
        let xsup = |d: &[f64]| x.iter().zip(d).fold(0.0_f64, |m, (x, d)| m.max((x * d).abs()));
        let (e0, e1, d0, d1) = match index {
            Some(set) => {
                let t = instantaneous_terms(state, &self.grid, &self.rho_bar, &self.p_bar, self.config.gamma, self.config.mu, set);
                energy.push(dt, t.e0_sum(), t.e1_sum(), t.d0_sum(), t.d1_sum())
            }
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        SeriesRow {
            tau: state.tau,
            alpha: state.alpha,
            alpha_tau: state.alpha_tau,
            sup_eta: sup_abs(&state.eta),
            sup_xetax: xsup(&ex),
            sup_etatau: sup_abs(&state.v),
            sup_xetaxtau: xsup(&vx),
            sup_b: sup_abs(&frak_b(&state.eta, &state.v, &self.grid)),
            z_min_increment: dz,
            e0,
            e1,
            d0,
            d1,
        }
    }

    /// Integrated momentum identities checked across the step `prev → next`,
    /// with every factor taken at the time level the scheme uses: `η, ζ` and
    /// the `α_τ η_τ` term from `prev`; `η_τ` in the viscous term, `η_ττ` and
    /// `α` from `next`.
    pub fn identity_residuals(&self, prev: &PerturbationState, next: &PerturbationState) -> Result<IdentityResiduals> {
        if next.step != prev.step + 1 || !(next.tau > prev.tau) {
            return Err(Error::MissingAcceleration(format!(
                "states at steps {} and {} are not consecutive",
                prev.step, next.step
            )));
        }
        let c = &self.config;
        let h = self.grid.spacing();
        let x = self.grid.nodes();
        let n1 = x.len();
        let eta = &prev.eta;
        let alpha = next.alpha;
        let alpha_tau = next.alpha_tau;
        let jac = jacobian(eta, &self.grid);
        let wpow = volume_power(eta, &jac, c.gamma);
        let q: Vec<f64> = prev.zeta.iter().zip(&wpow).map(|(z, w)| z / w).collect();
        let b = frak_b(eta, &next.v, &self.grid);
        let w: Vec<f64> = next.v.iter().zip(eta).map(|(v, e)| v / (1.0 + e)).collect();
        let vx = derivative_even(&next.v, h);
        let visc = 4.0 / 3.0 * c.mu * alpha.powi(3);
        let forcing = alpha.powf(4.0 - 3.0 * c.gamma);
        let rho = &self.rho_bar;

        let field = |f: &dyn Fn(usize) -> f64| (0..n1).map(f).collect::<Vec<f64>>();
        let cube = |i: usize| (x[i] * (1.0 + eta[i])).powi(3);
        let ii_integrand = field(&|i| q[i] * 3.0 * x[i] * x[i] * (1.0 + eta[i]).powi(2) * jac[i]);
        let iii_integrand = field(&|i| x[i].powi(4) * rho[i] * (1.0 + eta[i]) * next.accel[i]);
        let iv_integrand = field(&|i| x[i].powi(4) * rho[i] * (1.0 + eta[i]) * prev.v[i]);
        let v_integrand = field(&|i| c.delta * x[i].powi(4) * rho[i] * eta[i] * (1.0 + eta[i]).powi(2));
        let viii_integrand = field(&|i| x[i] * rho[i] * eta[i] / (1.0 + eta[i]));
        let ix_integrand = field(&|i| x[i] * rho[i] * next.accel[i] / (1.0 + eta[i]).powi(2));
        let x_integrand = field(&|i| x[i] * rho[i] * prev.v[i] / (1.0 + eta[i]).powi(2));

        let n = n1 - 1;
        let mut res = IdentityResiduals { res_103: 0.0, res_105: 0.0, res_105_bracket: 0.0 };
        for probe in PROBES {
            let p = self
                .grid
                .node_index(probe)
                .ok_or_else(|| Error::invalid("grid must contain the probe points 1/4, 1/2, 3/4"))?;
            let lhs = visc * cube(p) * b[p];
            let ii = cube(p) * q[p] - trapezoid_range(&ii_integrand, h, 0, p);
            let rhs = forcing * ii + alpha * trapezoid_range(&iii_integrand, h, 0, p)
                + alpha_tau * trapezoid_range(&iv_integrand, h, 0, p)
                - forcing * trapezoid_range(&v_integrand, h, 0, p);
            res.res_103 = res.res_103.max((lhs - rhs).abs());

            let rhs = 3.0 * visc * w[n] + forcing * q[p]
                + forcing * c.delta * trapezoid_range(&viii_integrand, h, p, n)
                - alpha * trapezoid_range(&ix_integrand, h, p, n)
                - alpha_tau * trapezoid_range(&x_integrand, h, p, n);
            let lhs = visc * (b[p] + 3.0 * w[p]);
            res.res_105 = res.res_105.max((lhs - rhs).abs());
            let bracket = (next.v[p] + x[p] * vx[p]) / jac[p] + 2.0 * w[p];
            res.res_105_bracket = res.res_105_bracket.max((visc * bracket - rhs).abs());
        }
        Ok(res)
    }

    /// Physical radial fields of the perturbed flow at the state's time.
    pub fn reconstruct_eulerian(&self, state: &PerturbationState) -> Result<EulerianFields> {
        let c = &self.config;
        let x = self.grid.nodes();
        let h = self.grid.spacing();
        let jac = jacobian(&state.eta, &self.grid);
        let wpow = volume_power(&state.eta, &jac, c.gamma);
        let a = state.alpha;
        let n1 = x.len();
        let mut r = vec![0.0; n1];
        let mut u = vec![0.0; n1];
        let mut rho = vec![0.0; n1];
        let mut p = vec![0.0; n1];
        let mut integrand = vec![0.0; n1];
        for i in 0..n1 {
            let s = 1.0 + state.eta[i];
            let rx = a * jac[i];
            if !(rx > 0.0) || !(s > 0.0) {
                return Err(Error::Degenerate { tau: state.tau, x: x[i], what: "r_x", value: rx });
            }
            r[i] = s * a * x[i];
            u[i] = x[i] * (state.v[i] + s * state.alpha_tau / a);
            rho[i] = self.rho_bar[i] / (a.powi(3) * s * s * jac[i]);
            p[i] = a.powf(-3.0 * c.gamma) * (self.p_bar[i] + state.zeta[i] / wpow[i]);
            integrand[i] = r[i] * r[i] * rho[i] * rx;
        }
        let reference: Vec<f64> = (0..n1).map(|i| x[i] * x[i] * self.rho_bar[i]).collect();
        Ok(EulerianFields {
            mass: trapezoid(&integrand, h),
            reference_mass: trapezoid(&reference, h),
            r,
            u,
            rho,
            p,
        })
    }
}

#[derive(Debug, Default)]
struct EnergyAccumulator {
    started: bool,
    e0: f64,
    e1: f64,
    d0: f64,
    d1: f64,
    last_d0: f64,
    last_d1: f64,
}

impl EnergyAccumulator {
    /// Running sup of the energies, trapezoid in τ of the dissipations.
    fn push(&mut self, dt: f64, e0: f64, e1: f64, d0: f64, d1: f64) -> (f64, f64, f64, f64) {
        if self.started {
            self.e0 = self.e0.max(e0);
            self.e1 = self.e1.max(e1);
            self.d0 += 0.5 * dt * (self.last_d0 + d0);
            self.d1 += 0.5 * dt * (self.last_d1 + d1);
        } else {
            self.started = true;
            self.e0 = e0;
            self.e1 = e1;
        }
        self.last_d0 = d0;
        self.last_d1 = d1;
        (self.e0, self.e1, self.d0, self.d1)
    }
}
