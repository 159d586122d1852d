//! Turning a `[target]` section into a density and its ground truth.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use gris_core::diagnostics::{GroundTruth, TruthSource};
use gris_core::targets::{
    defensive_is_ground_truth, gaussian_grid, laplace_approx, load_german_credit, logreg_posterior, Banana,
    DefensiveIsOptions, Gaussian, GaussianGridSpec, LaplaceOptions, Moments, TMixture, TMixtureSpec,
};
use gris_core::{derive_run_stream, Density, Execution, Point};
use nalgebra::{DMatrix, DVector};

use crate::config::TargetConfig;

/// Process-level settings read from the environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Env {
    /// `GRIS_DATA_DIR`, default `data`.
    pub data_dir: PathBuf,
    /// `GRIS_SEED`, overriding the configured base seed.
    pub seed_override: Option<u64>,
}

impl Default for Env {
    fn default() -> Self {
        Env { data_dir: PathBuf::from("data"), seed_override: None }
    }
}

impl Env {
    pub fn from_env() -> anyhow::Result<Self> {
        let data_dir = std::env::var_os("GRIS_DATA_DIR").map_or_else(|| PathBuf::from("data"), PathBuf::from);
        let seed_override = match std::env::var("GRIS_SEED") {
            Ok(s) => Some(s.trim().parse().with_context(|| format!("GRIS_SEED={s:?} is not an unsigned integer"))?),
            Err(_) => None,
        };
        Ok(Env { data_dir, seed_override })
    }

    pub fn resolve(&self, file: &Path) -> PathBuf {
        if file.is_absolute() {
            file.to_path_buf()
        } else {
            self.data_dir.join(file)
        }
    }
}

/// Stream used for ground-truth sampling, distinct from every run stream.
pub const TRUTH_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TruthOptions {
    pub seed: u64,
    pub is: DefensiveIsOptions,
}

pub fn build_density(cfg: &TargetConfig, env: &Env) -> anyhow::Result<Arc<dyn Density>> {
    Ok(match cfg {
        TargetConfig::Gaussian { mean, var, log_c } => {
            if mean.len() != var.len() || mean.is_empty() {
                bail!("gaussian mean and var must be non-empty and of equal length");
            }
            Arc::new(Gaussian::diagonal(DVector::from_column_slice(mean), var)?.scaled(*log_c))
        }
        TargetConfig::GaussianGrid { .. } => Arc::new(gaussian_grid(&grid_spec(cfg))?),
        TargetConfig::Banana { b, s } => Arc::new(Banana::new(*b, *s)?),
        TargetConfig::TMixture { .. } => Arc::new(TMixture::new(&t_spec(cfg))?),
        TargetConfig::Logreg { data_file, prior_var } => {
            let path = env.resolve(data_file);
            let mut model = load_german_credit(&path).with_context(|| format!("loading dataset {}", path.display()))?;
            model.prior_var = *prior_var;
            Arc::new(logreg_posterior(model))
        }
    })
}

fn grid_spec(cfg: &TargetConfig) -> GaussianGridSpec {
    match cfg {
        TargetConfig::GaussianGrid { grid_side, spacing, component_var, weight_decay } => GaussianGridSpec {
            grid_side: *grid_side,
            spacing: *spacing,
            component_cov: DMatrix::identity(2, 2) * *component_var,
            weight_decay: *weight_decay,
        },
        _ => unreachable!("not a gaussian grid"),
    }
}

fn t_spec(cfg: &TargetConfig) -> TMixtureSpec {
    match cfg {
        TargetConfig::TMixture { gen_seed, dim, dof, weights } => {
            TMixtureSpec::generate_with(*gen_seed, weights.len(), *dim, *dof, weights)
        }
        _ => unreachable!("not a t mixture"),
    }
}

fn from_moments(m: Moments) -> GroundTruth {
    GroundTruth {
        mean: m.mean.iter().copied().collect(),
        variance: m.variance().iter().copied().collect(),
        source: TruthSource::Analytic,
        log_z: Some(m.log_z),
        ess: None,
    }
}

/// Closed-form moments, where the target has them.
pub fn analytic_truth(cfg: &TargetConfig) -> anyhow::Result<Option<GroundTruth>> {
    Ok(match cfg {
        TargetConfig::Gaussian { mean, var, log_c } => {
            Some(from_moments(Gaussian::diagonal(DVector::from_column_slice(mean), var)?.scaled(*log_c).moments()))
        }
        TargetConfig::GaussianGrid { .. } => Some(from_moments(gaussian_grid(&grid_spec(cfg))?.moments())),
        TargetConfig::Banana { b, s } => Some(from_moments(Banana::new(*b, *s)?.moments())),
        TargetConfig::TMixture { .. } => Some(from_moments(TMixture::new(&t_spec(cfg))?.moments())),
        TargetConfig::Logreg { .. } => None,
    })
}

/// Analytic moments, or a defensive importance sampling estimate around
/// the Laplace approximation. Refuses to certify an estimate whose ESS is
/// below the floor.
pub fn compute_truth(cfg: &TargetConfig, env: &Env, opts: TruthOptions) -> anyhow::Result<GroundTruth> {
    if let Some(t) = analytic_truth(cfg)? {
        return Ok(t);
    }
    let density = build_density(cfg, env)?;
    let est = defensive_is(density.as_ref(), opts)?;
    if est.below_floor {
        bail!("defensive IS effective sample size {:.1} is below the floor {}; not certifying", est.ess.unwrap_or(0.0), opts.is.ess_floor);
    }
    Ok(est.truth)
}

pub struct IsTruth {
    pub truth: GroundTruth,
    pub below_floor: bool,
    pub ess: Option<f64>,
}

pub fn defensive_is(density: &dyn Density, opts: TruthOptions) -> anyhow::Result<IsTruth> {
    let (mode, cov) = laplace_approx(density, &DVector::zeros(density.dim()), LaplaceOptions::default())?;
    let mut rng = derive_run_stream(opts.seed, TRUTH_STREAM);
    let est = defensive_is_ground_truth(density, (&mode, &cov), opts.is, &mut rng, Execution::Parallel)?;
    let truth = GroundTruth {
        mean: est.mean.iter().copied().collect(),
        variance: est.var.iter().copied().collect(),
        source: TruthSource::DefensiveIs,
        log_z: Some(est.log_z),
        ess: Some(est.ess),
    };
    Ok(IsTruth { truth, below_floor: est.below_floor, ess: Some(est.ess) })
}

/// Point used to fix the remaining coordinates of a contour slice.
pub fn slice_anchor(cfg: &TargetConfig, density: &dyn Density) -> anyhow::Result<Point> {
    Ok(match cfg {
        TargetConfig::TMixture { .. } => TMixture::new(&t_spec(cfg))?.center(),
        TargetConfig::Logreg { .. } => laplace_approx(density, &DVector::zeros(density.dim()), LaplaceOptions::default())?.0,
        _ => analytic_truth(cfg)?.map_or_else(|| DVector::zeros(density.dim()), |t| DVector::from_vec(t.mean)),
    })
}
