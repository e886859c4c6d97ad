//! Each weighted term of the basic energy and dissipation, checked on
//! separable snapshots over a constant background (ρ̄ = 1, p̄ = δ(1−x²)/2)
//! where the spatial integrals are elementary.

use vacuumflow::diagnostics::{instantaneous_terms, InstantaneousTerms};
use vacuumflow::indices::IndexSet;
use vacuumflow::profiles::{build_density_profile, pressure_profile, DensityKind};
use vacuumflow::solver::{PerturbationState, Solver, SolverConfig};

const N: usize = 512;
const GAMMA: f64 = 1.5;
const DELTA: f64 = 1.3;
const ALPHA: f64 = 6.0;
const ALPHA_TAU: f64 = 15.0;
const C: f64 = 0.01;

fn solver() -> Solver {
    let mut cfg = SolverConfig::new(GAMMA, 1.0, DELTA, 1.0, 2.0, 1.0);
    cfg.n = N;
    let p = build_density_profile(DensityKind::Constant, 0.0, 1.0, GAMMA, N).unwrap();
    let pr = pressure_profile(&p, DELTA).unwrap();
    Solver::new(cfg, &p, &pr).unwrap()
}

fn set() -> IndexSet {
    IndexSet::compute(GAMMA, 1.8, 0.875).unwrap()
}

fn terms(edit: impl Fn(&mut PerturbationState, &[f64])) -> InstantaneousTerms {
    let s = solver();
    let mut st = PerturbationState::zero(N, ALPHA, ALPHA_TAU);
    edit(&mut st, s.grid().nodes());
    instantaneous_terms(&st, s.grid(), s.rho_bar(), s.p_bar(), GAMMA, 1.0, &set())
}

fn close(got: f64, want: f64) {
    assert!(want != 0.0);
    assert!(((got - want) / want).abs() < 1e-5, "got {got:e}, want {want:e}");
}

fn a(e: f64) -> f64 {
    ALPHA.powf(e)
}

/// With η = 0 and constant η_τ = c: `W_τ = 3γc`, `𝔅 = 0`, so
/// `ζ_τ = −3γc p̄` and `∫x²ζ_τ² = (9γ²c²δ²/4)·8/105`.
fn zeta_tau_norm() -> f64 {
    9.0 * GAMMA * GAMMA * C * C * DELTA * DELTA / 4.0 * 8.0 / 105.0
}

#[test]
fn e0_velocity() {
    let t = terms(|st, _| st.v.fill(C));
    close(t.e0[0], a(set().r1) * C * C / 5.0);
}

#[test]
fn e0_entropy() {
    let t = terms(|st, _| st.zeta.fill(C));
    close(t.e0[1], a(-set().l1) * C * C / 3.0);
}

#[test]
fn e0_acceleration() {
    let t = terms(|st, _| st.accel.fill(C));
    close(t.e0[2], a(set().r2) * C * C / 5.0);
}

#[test]
fn e0_entropy_rate() {
    let t = terms(|st, _| st.v.fill(C));
    close(t.e0[3], a(-set().l2) * zeta_tau_norm());
}

#[test]
fn e0_displacement() {
    let t = terms(|st, _| st.eta.fill(C));
    close(t.e0[4], C * C / 5.0);
}

#[test]
fn d0_velocity() {
    let t = terms(|st, _| st.v.fill(C));
    close(t.d0[0], a(set().r1 - 1.0) * ALPHA_TAU * C * C / 5.0);
}

#[test]
fn d0_velocity_strain() {
    let t = terms(|st, x| st.v = x.iter().map(|x| C * x).collect());
    close(t.d0[1], a(set().r1 + 2.0) * C * C / 5.0);
}

#[test]
fn d0_acceleration() {
    let t = terms(|st, _| st.accel.fill(C));
    close(t.d0[2], a(set().r2 - 1.0) * ALPHA_TAU * C * C / 5.0);
}

#[test]
fn d0_acceleration_strain() {
    let t = terms(|st, x| st.accel = x.iter().map(|x| C * x).collect());
    close(t.d0[3], a(set().r2 + 2.0) * C * C / 5.0);
}

#[test]
fn d0_entropy() {
    let t = terms(|st, _| st.zeta.fill(C));
    close(t.d0[4], a(-set().l1 - 1.0) * ALPHA_TAU * C * C / 3.0);
}

#[test]
fn d0_entropy_rate() {
    let t = terms(|st, _| st.v.fill(C));
    close(t.d0[5], a(-set().l2 - 1.0) * ALPHA_TAU * zeta_tau_norm());
}

#[test]
fn unrelated_terms_stay_zero() {
    let t = terms(|st, _| st.zeta.fill(C));
    assert_eq!(t.e0[0], 0.0);
    assert_eq!(t.e0[2], 0.0);
    assert_eq!(t.d0[1], 0.0);
    assert_eq!(t.e0[3], 0.0);
}
