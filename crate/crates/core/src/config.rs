//! Line-oriented `key = value` run configuration.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::indices::{central_witness, Case, IndexSet};
use crate::profiles::{build_density_profile, pressure_profile, DensityKind, DensityProfile, PressureProfile};
use crate::selfsim::GAMMA_MIN;
use crate::solver::SolverConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSpec {
    pub kind: DensityKind,
    pub varrho: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub profile: ProfileSpec,
    pub c_nu: f64,
    pub s_bar: f64,
    /// Explicit index choice; when absent the most central admissible lattice
    /// point of the strongest feasible case is used.
    pub r1: Option<f64>,
    pub sigma1: Option<f64>,
}

const REQUIRED: [&str; 6] = ["gamma", "mu", "delta", "alpha0", "alpha1", "tau_end"];
const OPTIONAL: [&str; 16] = [
    "N", "dtau", "c_nu", "s_bar", "profile", "varrho", "scale", "a_eta", "a_v", "a_q", "shape",
    "omega", "eps_det", "snapshot_every", "r1", "sigma1",
];

/// Scan resolution for the default index choice.
pub const DEFAULT_INDEX_GRID: usize = 200;

enum Value {
    Real(f64),
    Count(usize),
    Kind(DensityKind),
}

type RangeRule = (fn(f64) -> bool, &'static str);

fn range_rule(key: &str) -> Option<RangeRule> {
    let rule: RangeRule = match key {
        "gamma" => (|v| v > 1.0, "gamma must exceed 1"),
        "mu" => (|v| v > 0.0, "mu must be positive"),
        "delta" => (|v| v > 0.0, "delta must be positive"),
        "alpha0" => (|v| v > 0.0, "alpha0 must be positive"),
        "tau_end" => (|v| v > 0.0, "tau_end must be positive"),
        "dtau" => (|v| v > 0.0, "dtau must be positive"),
        "c_nu" => (|v| v > 0.0, "c_nu must be positive"),
        "scale" => (|v| v > 0.0, "scale must be positive"),
        "varrho" => (|v| v >= 0.0, "varrho must be nonnegative"),
        "a_eta" | "a_v" | "a_q" => (|v| v.abs() < 1.0, "perturbation amplitudes must be below 1 in magnitude"),
        "omega" => (|v| v > 0.0 && v < 1.0, "omega must lie in (0, 1)"),
        "eps_det" => (|v| v > 0.0 && v < 1.0, "eps_det must lie in (0, 1)"),
        _ => return None,
    };
    Some(rule)
}

fn parse_value(key: &str, raw: &str, line: usize) -> Result<Value> {
    let err = |message: String| Error::Config { key: key.to_string(), line, message };
    match key {
        "profile" => raw
            .parse::<DensityKind>()
            .map(Value::Kind)
            .map_err(|_| err(format!("profile must be one of power, constant, entropy_bounded; got `{raw}`"))),
        "N" | "shape" | "snapshot_every" => {
            let v: usize = raw
                .parse()
                .map_err(|_| err(format!("{key} expects a nonnegative integer, got `{raw}`")))?;
            let (min, what) = match key {
                "N" => (32, "N must be at least 32"),
                "shape" => (2, "shape must be at least 2"),
                _ => (1, "snapshot_every must be at least 1"),
            };
            if v < min {
                return Err(err(what.to_string()));
            }
            Ok(Value::Count(v))
        }
        _ => {
            let v: f64 = raw
                .parse()
                .map_err(|_| err(format!("{key} expects a real number, got `{raw}`")))?;
            if !v.is_finite() {
                return Err(err(format!("{key} must be finite")));
            }
            if let Some((ok, message)) = range_rule(key) {
                if !ok(v) {
                    return Err(err(message.to_string()));
                }
            }
            if key == "gamma" && v < GAMMA_MIN {
                return Err(err(format!("gamma must be at least {GAMMA_MIN}")));
            }
            Ok(Value::Real(v))
        }
    }
}

/// Parses and validates a configuration. Every line is checked (syntax, key,
/// type, range) before required keys are looked for, so a bad value is
/// reported ahead of a missing one.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut values: HashMap<&str, (Value, usize)> = HashMap::new();
    for (k, raw_line) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, raw)) = content.split_once('=') else {
            return Err(Error::Config {
                key: String::new(),
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        let raw = raw.trim();
        let Some(&canonical) = REQUIRED.iter().chain(OPTIONAL.iter()).find(|k| **k == key) else {
            return Err(Error::Config { key: key.to_string(), line, message: format!("unknown key `{key}`") });
        };
        if let Some((_, first)) = values.get(canonical) {
            return Err(Error::Config {
                key: key.to_string(),
                line,
                message: format!("duplicate key `{key}` (first set on line {first})"),
            });
        }
        let value = parse_value(canonical, raw, line)?;
        values.insert(canonical, (value, line));
    }
    for key in REQUIRED {
        if !values.contains_key(key) {
            return Err(Error::ConfigMissing(format!("missing required key `{key}`")));
        }
    }
    let real = |key: &str, default: f64| match values.get(key) {
        Some((Value::Real(v), _)) => *v,
        _ => default,
    };
    let count = |key: &str, default: usize| match values.get(key) {
        Some((Value::Count(v), _)) => *v,
        _ => default,
    };
    let mut solver = SolverConfig::new(
        real("gamma", f64::NAN),
        real("mu", f64::NAN),
        real("delta", f64::NAN),
        real("alpha0", f64::NAN),
        real("alpha1", f64::NAN),
        real("tau_end", f64::NAN),
    );
    solver.n = count("N", solver.n);
    solver.dtau = real("dtau", solver.dtau);
    solver.a_eta = real("a_eta", 0.0);
    solver.a_v = real("a_v", 0.0);
    solver.a_q = real("a_q", 0.0);
    solver.shape = count("shape", solver.shape as usize) as u32;
    solver.omega = real("omega", solver.omega);
    solver.eps_det = real("eps_det", solver.eps_det);
    solver.snapshot_every = count("snapshot_every", solver.snapshot_every);
    let kind = match values.get("profile") {
        Some((Value::Kind(k), _)) => *k,
        _ => DensityKind::EntropyBounded,
    };
    let r1 = values.get("r1").map(|_| real("r1", 0.0));
    let sigma1 = values.get("sigma1").map(|_| real("sigma1", 0.0));
    if r1.is_some() != sigma1.is_some() {
        let (key, line) = match (values.get("r1"), values.get("sigma1")) {
            (Some((_, l)), _) => ("r1", *l),
            (_, Some((_, l))) => ("sigma1", *l),
            _ => unreachable!(),
        };
        return Err(Error::Config {
            key: key.into(),
            line,
            message: "r1 and sigma1 must be given together".into(),
        });
    }
    let config = RunConfig {
        profile: ProfileSpec {
            kind,
            varrho: real("varrho", 1.0 / (solver.gamma - 1.0)),
            scale: real("scale", 1.0),
        },
        solver,
        c_nu: real("c_nu", 1.0),
        s_bar: real("s_bar", 0.0),
        r1,
        sigma1,
    };
    config.solver.validate()?;
    Ok(config)
}

fn push_real(out: &mut String, key: &str, v: f64) {
    let _ = writeln!(out, "{key} = {v:.16e}");
}

/// Canonical text: every key in a fixed order, reals with 17 significant
/// digits so that parsing the output reproduces the config exactly.
pub fn emit_config(c: &RunConfig) -> String {
    let s = &c.solver;
    let mut out = String::new();
    push_real(&mut out, "gamma", s.gamma);
    push_real(&mut out, "mu", s.mu);
    push_real(&mut out, "delta", s.delta);
    push_real(&mut out, "alpha0", s.alpha0);
    push_real(&mut out, "alpha1", s.alpha1);
    push_real(&mut out, "tau_end", s.tau_end);
    let _ = writeln!(out, "N = {}", s.n);
    push_real(&mut out, "dtau", s.dtau);
    push_real(&mut out, "c_nu", c.c_nu);
    push_real(&mut out, "s_bar", c.s_bar);
    let _ = writeln!(out, "profile = {}", c.profile.kind.as_str());
    push_real(&mut out, "varrho", c.profile.varrho);
    push_real(&mut out, "scale", c.profile.scale);
    push_real(&mut out, "a_eta", s.a_eta);
    push_real(&mut out, "a_v", s.a_v);
    push_real(&mut out, "a_q", s.a_q);
    let _ = writeln!(out, "shape = {}", s.shape);
    push_real(&mut out, "omega", s.omega);
    push_real(&mut out, "eps_det", s.eps_det);
    let _ = writeln!(out, "snapshot_every = {}", s.snapshot_every);
    if let (Some(r1), Some(sigma1)) = (c.r1, c.sigma1) {
        push_real(&mut out, "r1", r1);
        push_real(&mut out, "sigma1", sigma1);
    }
    out
}

impl RunConfig {
    pub fn build_profiles(&self) -> Result<(DensityProfile, PressureProfile)> {
        let p = build_density_profile(
            self.profile.kind,
            self.profile.varrho,
            self.profile.scale,
            self.solver.gamma,
            self.solver.n,
        )?;
        let pr = pressure_profile(&p, self.solver.delta)?;
        Ok((p, pr))
    }

    /// The configured indices, or the default choice. `None` when no case
    /// admits any lattice point (γ ≤ 7/6).
    pub fn index_set(&self) -> Result<Option<IndexSet>> {
        let gamma = self.solver.gamma;
        if let (Some(r1), Some(sigma1)) = (self.r1, self.sigma1) {
            return IndexSet::compute(gamma, r1, sigma1).map(Some);
        }
        for case in [Case::Three, Case::Two, Case::One] {
            if let Some((r1, sigma1)) = central_witness(gamma, case, DEFAULT_INDEX_GRID)? {
                return IndexSet::compute(gamma, r1, sigma1).map(Some);
            }
        }
        Ok(None)
    }

    /// Returns a copy with one key overridden, as the sweep runner does.
    pub fn with_override(&self, key: &str, value: &str) -> Result<RunConfig> {
        let mut text = String::new();
        let mut replaced = false;
        for line in emit_config(self).lines() {
            let k = line.split('=').next().unwrap_or("").trim();
            if k == key {
                let _ = writeln!(text, "{key} = {value}");
                replaced = true;
            } else {
                text.push_str(line);
                text.push('\n');
            }
        }
        if !replaced {
            let _ = writeln!(text, "{key} = {value}");
        }
        parse_config(&text)
    }
}
