// Range checks are written as `!(v > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod indices;
pub mod numerics;
pub mod ode;
pub mod profiles;
pub mod record;
pub mod selfsim;
pub mod solver;

pub use error::{Error, Result};
