//! Tracking the minimizer of a time-varying composite objective `f(x; t) + g(x)`
//! with a prediction-correction scheme whose inner problems are solved on the
//! forward-backward envelope.
//!
//! * [`problem`]: smooth oracles, nonsmooth terms and composite problems.
//! * [`envelope`]: value, residual and gradient of the forward-backward envelope.
//! * [`solvers`]: quasi-Newton, gradient and FISTA minimizers.
//! * [`prediction_correction`]: the tracking loop.
//! * [`analysis`]: convergence constants and sampling-period bounds.
//! * [`benchmark`]: the sparse elastic-net tracking experiment.
//! * [`cli`]: the `tvfbe` command-line front end.

// negated comparisons are used to reject NaN alongside out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod benchmark;
pub mod cli;
pub mod envelope;
pub mod error;
pub mod prediction_correction;
pub mod problem;
pub mod solvers;
mod spectrum;

pub use error::{Error, Result};
