use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("step size underflow at t = {time:.6e} (h = {step:.3e})")]
    StepUnderflow { time: f64, step: f64 },

    #[error("conserved quantity drifted by {drift:.3e} (limit {limit:.3e})")]
    InvariantDrift { drift: f64, limit: f64 },

    #[error("trajectory samples are not strictly monotone at index {index}")]
    NonMonotone { index: usize },

    #[error("insufficient horizon: {0}")]
    InsufficientHorizon(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("initial data violates the smallness bound: sup|{quantity}| = {value:.4e} >= omega = {omega}")]
    OmegaBound {
        quantity: &'static str,
        value: f64,
        omega: f64,
    },

    #[error("Lagrangian map degenerate at x = {x:.4} (tau = {tau:.6}): {what} = {value:.4e}")]
    Degenerate {
        tau: f64,
        x: f64,
        what: &'static str,
        value: f64,
    },

    #[error("non-finite value in field `{field}` at tau = {tau:.6}")]
    NonFinite { tau: f64, field: &'static str },

    #[error("time step {dtau:.3e} exceeds the stability bound {bound:.3e} at tau = {tau:.6}")]
    StabilityBound { tau: f64, dtau: f64, bound: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("index set violates the base constraint chain; energy weights undefined")]
    IndexSetInfeasible,

    #[error("decay fit undefined: {0}")]
    InsufficientWindow(String),

    #[error("missing acceleration history: {0}")]
    MissingAcceleration(String),

    #[error("{message} (line {line})")]
    Config { key: String, line: usize, message: String },

    #[error("{0}")]
    ConfigMissing(String),

    #[error("{}: {message}", path.display())]
    Record { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn record(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Record {
            path: path.into(),
            message: message.into(),
        }
    }
}
