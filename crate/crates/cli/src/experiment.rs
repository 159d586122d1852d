//! Replicated runs of one configured algorithm under an evaluation budget.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context};
use gris_core::adapt::AdaptConfig;
use gris_core::baselines::{run_chain, HmcConfig, Kernel, TmalaAdaptState, TmalaConfig};
use gris_core::checkpoint::Checkpoint;
use gris_core::diagnostics::{ess_is, ess_mc_min, max_se, squared_errors, GroundTruth, RunSummary};
use gris_core::gris::{
    gris_run, init_particles, rho_schedule, tempered_gris_run, BridgeKind, BridgeSpec, GrisConfig, ScheduleKind,
    StopRule,
};
use gris_core::linalg::Factor;
use gris_core::proposal::DriftConfig;
use gris_core::resample::Scheme;
use gris_core::targets::Gaussian;
use gris_core::{derive_run_stream, Density, Execution, RngStream, TargetModel};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::{AlgorithmConfig, BridgeName, ExecutionName, ExperimentConfig, GrisParams, SchemeName};
use crate::output::{fmt17, read_json, write_csv, write_json};
use crate::problem::{build_density, compute_truth, Env, TruthOptions};

pub const SUMMARY_FILE: &str = "summary.json";
pub const RNG_DESCRIPTION: &str = "ChaCha8Rng::seed_from_u64(base_seed) with stream = run_id";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentStamp {
    pub version: String,
    pub base_seed: u64,
    pub rng: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run_id: usize,
    pub error: String,
}

/// Everything persisted about one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub config: ExperimentConfig,
    pub environment: EnvironmentStamp,
    pub truth: GroundTruth,
    pub complete: bool,
    pub runs: Vec<RunSummary>,
    pub failures: Vec<RunFailure>,
}

impl RunArtifact {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        if !path.exists() {
            bail!("no {SUMMARY_FILE} in {}; nothing to report", dir.display());
        }
        read_json(&path)
    }
}

/// Config after environment overrides, plus the target and its truth.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub density: Arc<dyn Density>,
    pub truth: GroundTruth,
}

pub fn prepare(config: &ExperimentConfig, env: &Env) -> anyhow::Result<Prepared> {
    config.validate()?;
    let mut config = config.clone();
    if let Some(seed) = env.seed_override {
        config.run.base_seed = seed;
    }
    let density = build_density(&config.target, env)?;
    let truth = match &config.run.truth_file {
        Some(path) => read_json::<GroundTruth>(path)?,
        None => compute_truth(&config.target, env, TruthOptions { seed: config.run.base_seed, ..Default::default() })?,
    };
    if truth.dim() != density.dim() {
        bail!("ground truth has dimension {} but the target has {}", truth.dim(), density.dim());
    }
    Ok(Prepared { config, density, truth })
}

fn execution(e: ExecutionName) -> Execution {
    match e {
        ExecutionName::Sequential => Execution::Sequential,
        ExecutionName::Parallel => Execution::Parallel,
    }
}

fn gris_config(p: &GrisParams, d: usize, budget: u64, stride: u64, exec: Execution) -> GrisConfig {
    let mut cfg = GrisConfig::new(d, p.population, StopRule::EvalBudget(budget));
    cfg.drift = DriftConfig { delta: p.delta, decay_exponent: p.decay_exponent, cap_factor: p.drift_cap };
    cfg.adapt = AdaptConfig {
        t0: p.t0.unwrap_or(p.population),
        c0: DMatrix::identity(d, d) * (p.c0_scale / d as f64),
        s_d: p.s_d.unwrap_or(2.38 * 2.38 / d as f64),
        eps: p.eps,
        refresh_every: p.refresh_every,
    };
    cfg.scheme = match p.scheme {
        SchemeName::Multinomial => Scheme::Multinomial,
        SchemeName::Systematic => Scheme::Systematic,
    };
    cfg.checkpoint_stride = stride;
    cfg.execution = exec;
    cfg
}

struct Outcome {
    checkpoints: Vec<Checkpoint>,
    mean: Vec<f64>,
    var: Vec<f64>,
    log_evidence: Option<f64>,
    ess_is: Option<f64>,
    ess_mc: Option<f64>,
    acceptance_rate: Option<f64>,
}

/// One replicate: stream `(base_seed, run_id)`, started at the true mean.
pub fn run_one(prep: &Prepared, run_id: usize) -> anyhow::Result<RunSummary> {
    let cfg = &prep.config;
    let d = prep.density.dim();
    let budget = cfg.run.eval_budget;
    let stride = cfg.run.checkpoint_stride;
    let seed = cfg.run.base_seed;
    let mut rng: RngStream = derive_run_stream(seed, run_id as u64);
    let mut target = TargetModel::new(prep.density.clone());
    let start = DVector::from_column_slice(&prep.truth.mean);
    let sd = 2.38 * 2.38 / d as f64;

    let out = match &cfg.algorithm {
        AlgorithmConfig::Gris(p) | AlgorithmConfig::GrisTempered(p) => {
            let gc = gris_config(p, d, budget, stride, execution(cfg.run.execution));
            let c0 = Factor::from_cov(&gc.adapt.c0, 0.0, "C0")?;
            let init = init_particles(&start, &c0, p.population, &mut rng);
            match &p.tempering {
                None => {
                    let tr = gris_run(&mut target, &gc, &init, &mut rng)?;
                    let (mean, var) = tr.resampled_moments();
                    Outcome {
                        log_evidence: Some(tr.log_evidence()),
                        ess_is: Some(ess_is(&tr.raw_log_weights)?),
                        checkpoints: tr.checkpoints,
                        mean,
                        var,
                        ess_mc: None,
                        acceptance_rate: None,
                    }
                }
                Some(t) => {
                    let g0: Arc<dyn Density> = Arc::new(Gaussian::diagonal(start.clone(), &vec![t.g0_var; d])?);
                    let kind = match t.bridge {
                        BridgeName::Geometric => BridgeKind::Geometric,
                        BridgeName::Mixture => BridgeKind::Mixture,
                    };
                    let schedule = if t.power == 1.0 { ScheduleKind::Linear } else { ScheduleKind::Power(t.power) };
                    let bridge = BridgeSpec::new(kind, g0, rho_schedule(t.steps, schedule))?;
                    let tr = tempered_gris_run(&mut target, &bridge, &gc, &init, &mut rng)?;
                    let rec = tr.recycled.context("tempered run without recycled estimates")?;
                    Outcome {
                        log_evidence: Some(rec.log_evidence),
                        ess_is: Some(ess_is(&rec.log_weights)?),
                        checkpoints: rec.checkpoints,
                        mean: rec.mean,
                        var: rec.var,
                        ess_mc: None,
                        acceptance_rate: None,
                    }
                }
            }
        }
        alg => {
            let mut kernel = match alg {
                AlgorithmConfig::Am(a) => Kernel::Am(gris_core::adapt::AdaptState::new(AdaptConfig {
                    t0: a.t0,
                    c0: DMatrix::identity(d, d) * (a.c0_scale / d as f64),
                    s_d: a.s_d.unwrap_or(sd),
                    eps: a.eps,
                    refresh_every: 1,
                })?),
                AlgorithmConfig::Malta(m) => Kernel::Malta {
                    factor: Factor::from_cov(&(DMatrix::identity(d, d) * m.cov_scale.unwrap_or(sd)), 0.0, "MALTA C")?,
                    drift: DriftConfig { delta: m.delta, decay_exponent: 0.0, cap_factor: m.drift_cap },
                },
                AlgorithmConfig::Tmala(t) => {
                    let tc = TmalaConfig {
                        delta: t.delta,
                        cap_factor: t.drift_cap,
                        a1: t.a1,
                        s_d: t.s_d.unwrap_or(sd),
                        eps: t.eps,
                        gain_offset: t.gain_offset,
                    };
                    Kernel::Tmala(TmalaAdaptState::new(tc, start.clone(), DMatrix::identity(d, d) * t.cov0_scale)?)
                }
                AlgorithmConfig::Hmc(h) => Kernel::Hmc(HmcConfig::new(d, h.step_size, h.n_leapfrog)),
                _ => unreachable!("importance samplers handled above"),
            };
            let tr = run_chain(&mut target, &mut kernel, start.clone(), StopRule::EvalBudget(budget), stride, &mut rng)?;
            let (mean, var) = tr.moments();
            Outcome {
                ess_mc: ess_mc_min(&tr.samples, &prep.truth).ok(),
                acceptance_rate: Some(tr.acceptance_rate()),
                checkpoints: tr.checkpoints,
                mean,
                var,
                log_evidence: None,
                ess_is: None,
            }
        }
    };

    let evals = target.evals();
    if evals > budget {
        bail!("run {run_id} used {evals} evaluations, over the budget of {budget}");
    }
    Ok(RunSummary {
        run_id,
        seed,
        evals,
        se: squared_errors(&out.mean, &prep.truth),
        max_se: max_se(&out.mean, &out.var, &prep.truth),
        checkpoints: out.checkpoints,
        final_mean: out.mean,
        final_var: out.var,
        log_evidence: out.log_evidence,
        ess_is: out.ess_is,
        ess_mc: out.ess_mc,
        acceptance_rate: out.acceptance_rate,
    })
}

/// Runs every replicate on a pool of `jobs` workers. Results are ordered by
/// run id regardless of scheduling.
pub fn run_all(prep: &Prepared, jobs: usize) -> Vec<Result<RunSummary, RunFailure>> {
    let n = prep.config.run.n_runs;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunSummary, RunFailure>>>> = Mutex::new(vec![None; n]);
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let r = next.fetch_add(1, Ordering::Relaxed);
                if r >= n {
                    break;
                }
                let res = run_one(prep, r).map_err(|e| RunFailure { run_id: r, error: format!("{e:#}") });
                results.lock().expect("no worker panicked")[r] = Some(res);
            });
        }
    });
    results.into_inner().expect("no worker panicked").into_iter().map(|r| r.expect("every run visited")).collect()
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn trace_header(d: usize) -> Vec<String> {
    let mut h = vec!["run_id".to_string(), "eval_count".to_string()];
    h.extend((1..=d).map(|k| format!("mean_{k}")));
    h.extend((1..=d).map(|k| format!("var_{k}")));
    h.push("log_evidence".to_string());
    h
}

pub fn trace_rows(run: &RunSummary) -> Vec<Vec<String>> {
    run.checkpoints
        .iter()
        .map(|c| {
            let mut row = vec![run.run_id.to_string(), c.eval_count.to_string()];
            row.extend(c.mean.iter().map(|v| fmt17(*v)));
            row.extend(c.var.iter().map(|v| fmt17(*v)));
            row.push(c.log_evidence.map(fmt17).unwrap_or_default());
            row
        })
        .collect()
}

pub fn trace_path(dir: &Path, run_id: usize) -> PathBuf {
    dir.join(format!("run_{run_id:03}.csv"))
}

/// Runs the experiment and writes `run_NNN.csv` per run plus `summary.json`
/// into `output_dir`. Failed runs are listed and flag the artifact
/// incomplete; the call then returns an error after writing.
pub fn run_experiment(config: &ExperimentConfig, env: &Env, jobs: Option<usize>) -> anyhow::Result<RunArtifact> {
    let prep = prepare(config, env)?;
    let dir = prep.config.run.output_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let jobs = jobs.or(prep.config.run.jobs).unwrap_or_else(default_jobs);
    let d = prep.density.dim();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for res in run_all(&prep, jobs) {
        match res {
            Ok(run) => {
                write_csv(&trace_path(&dir, run.run_id), &trace_header(d), &trace_rows(&run))?;
                runs.push(run);
            }
            Err(f) => failures.push(f),
        }
    }
    let artifact = RunArtifact {
        environment: EnvironmentStamp {
            version: env!("CARGO_PKG_VERSION").to_string(),
            base_seed: prep.config.run.base_seed,
            rng: RNG_DESCRIPTION.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        },
        config: prep.config,
        truth: prep.truth,
        complete: failures.is_empty(),
        runs,
        failures,
    };
    write_json(&dir.join(SUMMARY_FILE), &artifact)?;
    if let Some(f) = artifact.failures.first() {
        bail!("{} of {} runs failed (first: run {}: {}); artifact flagged incomplete", artifact.failures.len(), artifact.config.run.n_runs, f.run_id, f.error);
    }
    Ok(artifact)
}
