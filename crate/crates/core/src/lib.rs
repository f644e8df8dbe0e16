//! Closed-loop benchmark for residual-force identification and adaptive
//! trajectory tracking on a simulated quadrotor under gusts.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod runlog;
pub mod sim;
pub mod sindy;
pub mod trajectory;
pub mod wind;

pub use error::{Error, ErrorCategory, Result};
