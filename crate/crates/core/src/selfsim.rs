//! The expansion factor `α` of the self-similar solution.
//!
//! In physical time `α` solves `α^{3γ-2} α'' = δ`; in rescaled time
//! `τ = ∫ dt/α` it solves `α^{3γ-4} α_ττ - α^{3γ-5} α_τ² = δ` with
//! `α_τ(0) = α₀α₁`. Both forms conserve
//! `(α')² + 2δ/(3γ-3) α^{3-3γ}` (with `α' = α_τ/α` in the τ form).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numerics::hermite;
use crate::ode::{dopri5, OdeOptions};

/// Smallest admissible adiabatic exponent; keeps `3γ - 3` away from zero.
pub const GAMMA_MIN: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeCoord {
    T,
    Tau,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfSimParams {
    pub delta: f64,
    pub gamma: f64,
    pub alpha0: f64,
    pub alpha1: f64,
}

impl SelfSimParams {
    pub fn new(delta: f64, gamma: f64, alpha0: f64, alpha1: f64) -> Result<Self> {
        let p = Self {
            delta,
            gamma,
            alpha0,
            alpha1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.delta, self.gamma, self.alpha0, self.alpha1]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::invalid("self-similar parameters must be finite"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::invalid("delta must be positive"));
        }
        if !(self.gamma >= GAMMA_MIN) {
            return Err(Error::invalid(format!("gamma must be at least {GAMMA_MIN}")));
        }
        if !(self.alpha0 > 0.0) {
            return Err(Error::invalid("alpha0 must be positive"));
        }
        Ok(())
    }

    /// `2δ / (3γ - 3)`.
    pub fn potential_coeff(&self) -> f64 {
        2.0 * self.delta / (3.0 * self.gamma - 3.0)
    }

    pub fn invariant(&self, alpha: f64, alpha_t: f64) -> f64 {
        alpha_t * alpha_t + self.potential_coeff() * alpha.powf(3.0 - 3.0 * self.gamma)
    }

    pub fn invariant0(&self) -> f64 {
        self.invariant(self.alpha0, self.alpha1)
    }

    /// Lower expansion rate in τ; equals `α₁`.
    pub fn beta1(&self) -> f64 {
        self.alpha1
    }

    /// Upper expansion rate in τ; the limit of `α_τ / α`.
    pub fn beta2(&self) -> f64 {
        self.invariant0().sqrt()
    }

    /// `α''` in physical time.
    pub fn accel_t(&self, alpha: f64) -> f64 {
        self.delta * alpha.powf(2.0 - 3.0 * self.gamma)
    }

    /// `α_ττ` in rescaled time.
    pub fn accel_tau(&self, alpha: f64, alpha_tau: f64) -> f64 {
        self.delta * alpha.powf(4.0 - 3.0 * self.gamma) + alpha_tau * alpha_tau / alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSample {
    pub time: f64,
    pub alpha: f64,
    /// `dα/dt` or `dα/dτ` depending on the trajectory coordinate.
    pub alpha_prime: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaTrajectory {
    pub coord: TimeCoord,
    pub params: SelfSimParams,
    pub samples: Vec<AlphaSample>,
    pub invariant0: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl AlphaTrajectory {
    /// Wraps externally produced samples (no integration).
    pub fn from_samples(coord: TimeCoord, params: SelfSimParams, samples: Vec<AlphaSample>) -> Self {
        Self {
            coord,
            params,
            samples,
            invariant0: params.invariant0(),
            beta1: params.beta1(),
            beta2: params.beta2(),
        }
    }

    /// The conserved quantity evaluated at a sample.
    pub fn invariant_at(&self, s: &AlphaSample) -> f64 {
        let rate = match self.coord {
            TimeCoord::T => s.alpha_prime,
            TimeCoord::Tau => s.alpha_prime / s.alpha,
        };
        self.params.invariant(s.alpha, rate)
    }

    /// Largest relative deviation of the invariant from its initial value.
    pub fn max_invariant_drift(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| ((self.invariant_at(s) - self.invariant0) / self.invariant0).abs())
            .fold(0.0, f64::max)
    }

    fn second_derivative(&self, s: &AlphaSample) -> f64 {
        match self.coord {
            TimeCoord::T => self.params.accel_t(s.alpha),
            TimeCoord::Tau => self.params.accel_tau(s.alpha, s.alpha_prime),
        }
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map(|s| s.time).unwrap_or(0.0)
    }

    /// `(α, α')` at `time` by cubic Hermite interpolation of the samples.
    pub fn eval(&self, time: f64) -> Option<(f64, f64)> {
        let s = &self.samples;
        if s.is_empty() || time < s[0].time || time > s[s.len() - 1].time {
            return None;
        }
        let i = match s.binary_search_by(|p| p.time.partial_cmp(&time).unwrap()) {
            Ok(i) => return Some((s[i].alpha, s[i].alpha_prime)),
            Err(i) => i - 1,
        };
        let (a, b) = (&s[i], &s[i + 1]);
        let alpha = hermite(a.time, b.time, a.alpha, b.alpha, a.alpha_prime, b.alpha_prime, time);
        let prime = hermite(
            a.time,
            b.time,
            a.alpha_prime,
            b.alpha_prime,
            self.second_derivative(a),
            self.second_derivative(b),
            time,
        );
        Some((alpha, prime))
    }

    /// CSV with columns `time, alpha, alpha_prime, invariant`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,alpha,alpha_prime,invariant\n");
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                s.time,
                s.alpha,
                s.alpha_prime,
                self.invariant_at(s)
            );
        }
        out
    }
}

fn check_horizon(end: f64, tol: f64) -> Result<()> {
    if !(end > 0.0) || !end.is_finite() {
        return Err(Error::invalid("integration horizon must be positive"));
    }
    if !(tol > 0.0) || !(tol < 1e-2) {
        return Err(Error::invalid("tolerance must lie in (0, 1e-2)"));
    }
    Ok(())
}

fn integrate(
    coord: TimeCoord,
    params: SelfSimParams,
    end: f64,
    tol: f64,
) -> Result<AlphaTrajectory> {
    params.validate()?;
    check_horizon(end, tol)?;
    let opts = OdeOptions::new(1e-2 * tol).with_max_step(end / 2000.0);
    let mut samples = Vec::new();
    let record = |time: f64, y: &[f64; 2]| {
        samples.push(AlphaSample {
            time,
            alpha: y[0],
            alpha_prime: y[1],
        })
    };
    match coord {
        TimeCoord::T => {
            dopri5(
                |_, y: &[f64; 2]| [y[1], params.accel_t(y[0])],
                0.0,
                [params.alpha0, params.alpha1],
                end,
                &opts,
                record,
            )?;
        }
        TimeCoord::Tau => {
            dopri5(
                |_, y: &[f64; 2]| [y[1], params.accel_tau(y[0], y[1])],
                0.0,
                [params.alpha0, params.alpha0 * params.alpha1],
                end,
                &opts,
                record,
            )?;
        }
    }
    if let Some(bad) = samples.iter().find(|s| !(s.alpha > 0.0)) {
        return Err(Error::invalid(format!(
            "alpha lost positivity at time {}",
            bad.time
        )));
    }
    let traj = AlphaTrajectory::from_samples(coord, params, samples);
    let drift = traj.max_invariant_drift();
    if drift > 10.0 * tol {
        return Err(Error::InvariantDrift {
            drift,
            limit: 10.0 * tol,
        });
    }
    Ok(traj)
}

/// Integrates `α^{3γ-2} α'' = δ` on `[0, t_end]`.
pub fn integrate_alpha_t(params: SelfSimParams, t_end: f64, tol: f64) -> Result<AlphaTrajectory> {
    integrate(TimeCoord::T, params, t_end, tol)
}

/// Integrates the rescaled-time form on `[0, tau_end]`.
pub fn integrate_alpha_tau(params: SelfSimParams, tau_end: f64, tol: f64) -> Result<AlphaTrajectory> {
    integrate(TimeCoord::Tau, params, tau_end, tol)
}

/// Advances `(α, α_τ)` in rescaled time alongside the perturbation solver.
#[derive(Debug, Clone)]
pub struct AlphaStepper {
    params: SelfSimParams,
    opts: OdeOptions,
    pub tau: f64,
    pub alpha: f64,
    pub alpha_tau: f64,
}

impl AlphaStepper {
    pub fn new(params: SelfSimParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            opts: OdeOptions::new(1e-13),
            tau: 0.0,
            alpha: params.alpha0,
            alpha_tau: params.alpha0 * params.alpha1,
        })
    }

    /// Resumes from a known state.
    pub fn at(params: SelfSimParams, tau: f64, alpha: f64, alpha_tau: f64) -> Result<Self> {
        let mut s = Self::new(params)?;
        s.tau = tau;
        s.alpha = alpha;
        s.alpha_tau = alpha_tau;
        Ok(s)
    }

    pub fn advance(&mut self, dtau: f64) -> Result<()> {
        let p = self.params;
        let y = dopri5(
            |_, y: &[f64; 2]| [y[1], p.accel_tau(y[0], y[1])],
            self.tau,
            [self.alpha, self.alpha_tau],
            self.tau + dtau,
            &self.opts,
            |_, _| {},
        )?;
        self.tau += dtau;
        self.alpha = y[0];
        self.alpha_tau = y[1];
        Ok(())
    }
}

/// Monotone map between physical and rescaled time.
#[derive(Debug, Clone)]
pub struct TimeMap {
    pub t: Vec<f64>,
    pub tau: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// `τ(t) = ∫₀ᵗ dσ/α(σ)` by end-point corrected trapezoid quadrature over the
/// trajectory samples (exact for cubics, using `(1/α)' = -α'/α²`).
pub fn rescale_time(traj: &AlphaTrajectory) -> Result<TimeMap> {
    if traj.coord != TimeCoord::T {
        return Err(Error::invalid("rescale_time needs a physical-time trajectory"));
    }
    let s = &traj.samples;
    if s.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    for (i, w) in s.windows(2).enumerate() {
        if !(w[1].time > w[0].time) {
            return Err(Error::NonMonotone { index: i + 1 });
        }
    }
    if let Some(i) = s.iter().position(|p| !(p.alpha > 0.0)) {
        return Err(Error::NonMonotone { index: i });
    }
    let mut tau = Vec::with_capacity(s.len());
    tau.push(0.0);
    for w in s.windows(2) {
        let h = w[1].time - w[0].time;
        let f0 = 1.0 / w[0].alpha;
        let f1 = 1.0 / w[1].alpha;
        let d0 = -w[0].alpha_prime / (w[0].alpha * w[0].alpha);
        let d1 = -w[1].alpha_prime / (w[1].alpha * w[1].alpha);
        let last = *tau.last().unwrap();
        tau.push(last + 0.5 * h * (f0 + f1) + h * h * (d0 - d1) / 12.0);
    }
    Ok(TimeMap {
        t: s.iter().map(|p| p.time).collect(),
        tau,
        alpha: s.iter().map(|p| p.alpha).collect(),
    })
}

impl TimeMap {
    pub fn tau_of(&self, t: f64) -> Option<f64> {
        let slopes: Vec<f64> = self.alpha.iter().map(|a| 1.0 / a).collect();
        monotone_hermite(&self.t, &self.tau, &slopes, t)
    }

    pub fn t_of(&self, tau: f64) -> Option<f64> {
        monotone_hermite(&self.tau, &self.t, &self.alpha, tau)
    }
}

/// Piecewise-cubic Hermite interpolation of increasing data with the
/// Fritsch–Carlson slope limiter applied per interval.
fn monotone_hermite(xs: &[f64], ys: &[f64], slopes: &[f64], x: f64) -> Option<f64> {
    let n = xs.len();
    if n == 0 || x < xs[0] || x > xs[n - 1] {
        return None;
    }
    if n == 1 {
        return Some(ys[0]);
    }
    let i = match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
        Ok(i) => return Some(ys[i]),
        Err(i) => i - 1,
    };
    let h = xs[i + 1] - xs[i];
    let secant = (ys[i + 1] - ys[i]) / h;
    let (mut d0, mut d1) = (slopes[i], slopes[i + 1]);
    if secant <= 0.0 {
        d0 = 0.0;
        d1 = 0.0;
    } else {
        let a = d0 / secant;
        let b = d1 / secant;
        let r = a * a + b * b;
        if r > 9.0 {
            let t = 3.0 / r.sqrt();
            d0 = t * a * secant;
            d1 = t * b * secant;
        }
    }
    Some(hermite(xs[i], xs[i + 1], ys[i], ys[i + 1], d0, d1, x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Asymptote {
    /// Intercept of the linear envelope `c₁ + c₂ t`.
    pub c1: f64,
    /// Limit slope estimated from the tail.
    pub c2: f64,
    /// `max α / (c₁ + c₂ t)` over the samples.
    pub sup_ratio: f64,
    /// `α / (c₁ + c₂ t)` at the last sample.
    pub tail_ratio: f64,
    /// Relative gap between `c₂` and the exact limit slope `√invariant0`.
    pub slope_gap: f64,
}

/// Fits the linear envelope of `α(t)`: `c₂` is the terminal slope and `c₁` the
/// smallest intercept keeping `α ≤ c₁ + c₂ t` on every sample, so the
/// supremum of the ratio is attained.
pub fn asymptote_check(traj: &AlphaTrajectory) -> Result<Asymptote> {
    if traj.coord != TimeCoord::T {
        return Err(Error::invalid("asymptote_check needs a physical-time trajectory"));
    }
    let s = &traj.samples;
    if s.len() < 10 {
        return Err(Error::InsufficientHorizon("too few samples".into()));
    }
    let last = s[s.len() - 1];
    let t_tail = 0.9 * last.time;
    let tail_start = s.iter().find(|p| p.time >= t_tail).copied().unwrap_or(last);
    let c2 = last.alpha_prime;
    if !(c2 > 0.0) {
        return Err(Error::InsufficientHorizon(format!(
            "terminal slope {c2} is not positive"
        )));
    }
    let change = (last.alpha_prime - tail_start.alpha_prime).abs() / c2;
    if change > 1e-2 {
        return Err(Error::InsufficientHorizon(format!(
            "slope changed by {change:.3e} over the last 10% of the horizon"
        )));
    }
    let c1 = s
        .iter()
        .map(|p| p.alpha - c2 * p.time)
        .fold(f64::NEG_INFINITY, f64::max);
    let sup_ratio = s
        .iter()
        .map(|p| p.alpha / (c1 + c2 * p.time))
        .fold(f64::NEG_INFINITY, f64::max);
    let exact = traj.invariant0.sqrt();
    Ok(Asymptote {
        c1,
        c2,
        sup_ratio,
        tail_ratio: last.alpha / (c1 + c2 * last.time),
        slope_gap: (c2 - exact).abs() / exact,
    })
}
