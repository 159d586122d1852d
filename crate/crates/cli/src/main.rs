use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use gris_cli::config::TargetConfig;
use gris_cli::contour::{emit_contour, GridSpec};
use gris_cli::output::{fmt17, write_json};
use gris_cli::problem::{analytic_truth, build_density, defensive_is, TruthOptions};
use gris_cli::{report, tune, Env, ExperimentConfig};
use gris_core::targets::DefensiveIsOptions;

#[derive(Parser)]
#[command(name = "gris", version, about = "Gradient importance sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every replicate of a configured experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for replicates.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Aggregate tables for a finished experiment directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Write the ground-truth moments of a target as JSON.
    GroundTruth {
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: PathBuf,
        /// Take target parameters from this config's [target] section.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defensive IS sample count.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a log-density grid for contour plots.
    Contour {
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        nx: usize,
        #[arg(long, default_value_t = 100)]
        ny: usize,
        #[arg(long, allow_hyphen_values = true)]
        xmin: f64,
        #[arg(long, allow_hyphen_values = true)]
        xmax: f64,
        #[arg(long, allow_hyphen_values = true)]
        ymin: f64,
        #[arg(long, allow_hyphen_values = true)]
        ymax: f64,
        /// Zero-based coordinate pair, e.g. `8,9`; defaults to the last two.
        #[arg(long)]
        dims: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Grid-search the drift scale.
    Tune {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated drift scales.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print a complete default configuration.
    PrintConfig {
        #[arg(long, default_value = "banana")]
        target: String,
        #[arg(long, default_value = "gris")]
        algorithm: String,
    },
}

fn target_config(name: &str, config: Option<&PathBuf>) -> anyhow::Result<TargetConfig> {
    match config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            if cfg.target.name() != name {
                bail!("--target {name} does not match the config's target {}", cfg.target.name());
            }
            Ok(cfg.target)
        }
        None => TargetConfig::default_for(name),
    }
}

fn parse_dims(text: &str) -> anyhow::Result<(usize, usize)> {
    let (a, b) = text.split_once(',').context("--dims expects two comma-separated indices")?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let env = Env::from_env()?;
    match cli.command {
        Command::Run { config, jobs } => {
            let cfg = ExperimentConfig::load(&config)?;
            let art = gris_cli::run_experiment(&cfg, &env, jobs)?;
            println!("{} runs written to {}", art.runs.len(), art.config.run.output_dir.display());
        }
        Command::Report { dir } => {
            let r = report::report(&dir)?;
            let last = r.checkpoints.last().context("no checkpoints recorded")?;
            println!("runs: {}", r.runs.len());
            println!("final eval_count: {}", last.eval_count);
            println!("pooled mean MSE: {}", fmt17(gris_core::diagnostics::ErrorDecomposition::pooled(&last.mean.mse)));
            for b in &r.boxes {
                println!("{}: median {} [q1 {}, q3 {}]", b.metric, fmt17(b.median), fmt17(b.q1), fmt17(b.q3));
            }
        }
        Command::GroundTruth { target, out, config, samples, seed } => {
            let cfg = target_config(&target, config.as_ref())?;
            if let Some(t) = analytic_truth(&cfg)? {
                write_json(&out, &t)?;
            } else {
                let density = build_density(&cfg, &env)?;
                let opts = TruthOptions { seed, is: DefensiveIsOptions { n_samples: samples, ..Default::default() } };
                let est = defensive_is(density.as_ref(), opts)?;
                let ess = est.ess.unwrap_or(0.0);
                if est.below_floor {
                    bail!("effective sample size {ess:.1} is below the floor {}; refusing to certify", opts.is.ess_floor);
                }
                write_json(&out, &est.truth)?;
                println!("defensive IS effective sample size: {ess:.1}");
            }
            println!("ground truth written to {}", out.display());
        }
        Command::Contour { target, out, nx, ny, xmin, xmax, ymin, ymax, dims, config } => {
            let cfg = target_config(&target, config.as_ref())?;
            let d = build_density(&cfg, &env)?.dim();
            let dims = match dims {
                Some(s) => parse_dims(&s)?,
                None => (d - 2, d - 1),
            };
            let meta = emit_contour(&cfg, &env, GridSpec { nx, ny, xmin, xmax, ymin, ymax, dims }, &out)?;
            println!("{} grid ({}) written to {}", meta.target, meta.kind, out.display());
        }
        Command::Tune { config, grid, jobs } => {
            let cfg = ExperimentConfig::load(&config)?;
            let points = tune::tune(&cfg, &env, &tune::parse_grid(&grid)?, jobs)?;
            println!("delta,variance,mse");
            for p in &points {
                println!("{},{},{}", fmt17(p.delta), fmt17(p.variance), fmt17(p.mse));
            }
            if let Some(b) = tune::best(&points) {
                println!("best delta: {}", b.delta);
            }
        }
        Command::PrintConfig { target, algorithm } => {
            print!("{}", ExperimentConfig::default_for(&target, &algorithm)?.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
