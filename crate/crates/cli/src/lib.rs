//! Experiment harness: configured replicate runs, ensemble reports,
//! ground-truth files, contour grids and drift-scale tuning.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod contour;
pub mod experiment;
pub mod output;
pub mod problem;
pub mod report;
pub mod tune;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, RunArtifact};
pub use problem::Env;
