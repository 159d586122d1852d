//! Grid search over the drift scale `δ`, scored by the across-run variance
//! of the final mean estimates.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::experiment::{default_jobs, prepare, run_all};
use crate::output::{fmt17, write_csv};
use crate::problem::Env;

pub const TUNE_FILE: &str = "tune.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunePoint {
    pub delta: f64,
    /// Mean over dimensions of the across-run variance of the final mean.
    pub variance: f64,
    /// Mean over dimensions of the final mean's MSE.
    pub mse: f64,
}

pub fn parse_grid(text: &str) -> anyhow::Result<Vec<f64>> {
    let grid = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("grid entry {s:?} is not a number")))
        .collect::<anyhow::Result<Vec<f64>>>()?;
    if grid.is_empty() || grid.iter().any(|d| !(*d >= 0.0)) {
        bail!("grid must list non-negative drift scales");
    }
    Ok(grid)
}

/// Scores every `δ` in `grid`; writes `tune.csv` to the output directory.
pub fn tune(config: &ExperimentConfig, env: &Env, grid: &[f64], jobs: Option<usize>) -> anyhow::Result<Vec<TunePoint>> {
    let mut points = Vec::with_capacity(grid.len());
    for &delta in grid {
        let mut cfg = config.clone();
        let name = cfg.algorithm.name();
        *cfg.algorithm.delta_mut().with_context(|| format!("algorithm {name} has no drift scale to tune"))? = delta;
        let prep = prepare(&cfg, env)?;
        let runs = run_all(&prep, jobs.or(cfg.run.jobs).unwrap_or_else(default_jobs))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|f| anyhow::anyhow!("run {} failed at delta {delta}: {}", f.run_id, f.error))?;
        let r = runs.len() as f64;
        let d = prep.truth.dim();
        let mut variance = 0.0;
        let mut mse = 0.0;
        for k in 0..d {
            let m = runs.iter().map(|x| x.final_mean[k]).sum::<f64>() / r;
            if runs.len() > 1 {
                variance += runs.iter().map(|x| (x.final_mean[k] - m).powi(2)).sum::<f64>() / (r - 1.0);
            }
            mse += runs.iter().map(|x| x.se[k]).sum::<f64>() / r;
        }
        points.push(TunePoint { delta, variance: variance / d as f64, mse: mse / d as f64 });
    }
    let dir = &config.run.output_dir;
    std::fs::create_dir_all(dir)?;
    let rows: Vec<Vec<String>> = points.iter().map(|p| vec![fmt17(p.delta), fmt17(p.variance), fmt17(p.mse)]).collect();
    write_csv(&dir.join(TUNE_FILE), &["delta", "variance", "mse"].map(String::from), &rows)?;
    Ok(points)
}

/// The `δ` with the smallest variance score.
pub fn best(points: &[TunePoint]) -> Option<TunePoint> {
    points.iter().copied().min_by(|a, b| a.variance.total_cmp(&b.variance))
}
