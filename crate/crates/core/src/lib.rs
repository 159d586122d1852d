//! Gradient importance sampling (GRIS) for static targets.
//!
//! The crate provides a population Monte Carlo sampler whose Gaussian
//! proposals are shifted by a decaying Langevin drift and scaled by a
//! covariance matrix adapted to the samples collected so far, together with
//! the MCMC samplers it is usually compared against, a set of benchmark
//! targets with analytic gradients, and the diagnostics needed to score
//! runs against ground truth.
//!
//! Every target evaluation goes through a [`TargetModel`], which counts
//! evaluations; a joint density/gradient query at one point costs a single
//! unit of budget.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod baselines;
pub mod checkpoint;
pub mod diagnostics;
mod error;
pub mod exec;
pub mod gris;
pub mod linalg;
pub mod model;
pub mod proposal;
pub mod resample;
pub mod targets;

pub use error::{GrisError, Result};
pub use exec::Execution;
pub use model::{derive_run_stream, Density, EvalCounter, Point, RngStream, TargetModel};
