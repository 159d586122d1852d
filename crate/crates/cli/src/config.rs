//! TOML experiment configuration with `[target]`, `[algorithm]` and `[run]`
//! sections. Every field has a default, so `print-config` can show them all.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetConfig,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    /// `c · N(mean, diag(var))` with `log c = log_c`.
    Gaussian {
        #[serde(default = "defaults::gaussian_mean")]
        mean: Vec<f64>,
        #[serde(default = "defaults::gaussian_var")]
        var: Vec<f64>,
        #[serde(default)]
        log_c: f64,
    },
    GaussianGrid {
        #[serde(default = "defaults::grid_side")]
        grid_side: usize,
        #[serde(default = "defaults::grid_spacing")]
        spacing: f64,
        #[serde(default = "defaults::one")]
        component_var: f64,
        #[serde(default = "defaults::grid_decay")]
        weight_decay: f64,
    },
    Banana {
        #[serde(default = "defaults::banana_b")]
        b: f64,
        #[serde(default = "defaults::banana_s")]
        s: f64,
    },
    TMixture {
        #[serde(default = "defaults::one_u64")]
        gen_seed: u64,
        #[serde(default = "defaults::t_dim")]
        dim: usize,
        #[serde(default = "defaults::t_dof")]
        dof: f64,
        #[serde(default = "defaults::t_weights")]
        weights: Vec<f64>,
    },
    /// Logistic regression on the German credit table, resolved against
    /// `GRIS_DATA_DIR` when relative.
    Logreg {
        #[serde(default = "defaults::german_file")]
        data_file: PathBuf,
        #[serde(default = "defaults::prior_var")]
        prior_var: f64,
    },
}

impl TargetConfig {
    pub const NAMES: [&'static str; 5] = ["gaussian", "gaussian_grid", "banana", "t_mixture", "logreg"];

    /// The named target with default parameters.
    pub fn default_for(name: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(&format!("[target]\nname = \"{name}\"\n"))
            .with_context(|| format!("unknown target {name:?}; expected one of {:?}", Self::NAMES))?;
        Ok(cfg.target)
    }

    pub fn name(&self) -> &'static str {
        match self {
            TargetConfig::Gaussian { .. } => "gaussian",
            TargetConfig::GaussianGrid { .. } => "gaussian_grid",
            TargetConfig::Banana { .. } => "banana",
            TargetConfig::TMixture { .. } => "t_mixture",
            TargetConfig::Logreg { .. } => "logreg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    #[default]
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeName {
    #[default]
    Geometric,
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionName {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperingParams {
    #[serde(default)]
    pub bridge: BridgeName,
    /// Number of tempering iterations `T`.
    #[serde(default = "defaults::temper_steps")]
    pub steps: usize,
    /// `ρ_t = (t/T)^power`; 1 is the linear schedule.
    #[serde(default = "defaults::one")]
    pub power: f64,
    /// `g0 = N(start, g0_var · I)`.
    #[serde(default = "defaults::g0_var")]
    pub g0_var: f64,
}

impl Default for TemperingParams {
    fn default() -> Self {
        toml::from_str("").expect("all tempering fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrisParams {
    #[serde(default = "defaults::population")]
    pub population: usize,
    #[serde(default = "defaults::gris_delta")]
    pub delta: f64,
    #[serde(default = "defaults::decay_exponent")]
    pub decay_exponent: f64,
    /// Drift norm cap as a multiple of `√tr(C_t)`; absent disables the cap.
    #[serde(default = "defaults::drift_cap")]
    pub drift_cap: Option<f64>,
    /// Warm-up length; defaults to the population size.
    #[serde(default)]
    pub t0: Option<usize>,
    /// `C0 = c0_scale / d · I`.
    #[serde(default = "defaults::c0_scale")]
    pub c0_scale: f64,
    /// Defaults to `2.38² / d`.
    #[serde(default)]
    pub s_d: Option<f64>,
    #[serde(default = "defaults::eps")]
    pub eps: f64,
    #[serde(default = "defaults::one_usize")]
    pub refresh_every: usize,
    #[serde(default)]
    pub scheme: SchemeName,
    #[serde(default)]
    pub tempering: Option<TemperingParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmParams {
    #[serde(default = "defaults::am_t0")]
    pub t0: usize,
    #[serde(default = "defaults::c0_scale")]
    pub c0_scale: f64,
    #[serde(default)]
    pub s_d: Option<f64>,
    #[serde(default = "defaults::eps")]
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaltaParams {
    #[serde(default = "defaults::malta_delta")]
    pub delta: f64,
    /// Fixed proposal covariance `cov_scale · I`; defaults to `2.38² / d`.
    #[serde(default)]
    pub cov_scale: Option<f64>,
    #[serde(default = "defaults::drift_cap")]
    pub drift_cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmalaParams {
    #[serde(default = "defaults::one")]
    pub delta: f64,
    #[serde(default = "defaults::drift_cap")]
    pub drift_cap: Option<f64>,
    #[serde(default = "defaults::a1")]
    pub a1: f64,
    #[serde(default)]
    pub s_d: Option<f64>,
    #[serde(default = "defaults::eps")]
    pub eps: f64,
    #[serde(default = "defaults::gain_offset")]
    pub gain_offset: f64,
    /// Initial covariance `cov0_scale · I`.
    #[serde(default = "defaults::one")]
    pub cov0_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmcParams {
    #[serde(default = "defaults::hmc_step")]
    pub step_size: f64,
    #[serde(default = "defaults::hmc_leapfrog")]
    pub n_leapfrog: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmConfig {
    Gris(GrisParams),
    GrisTempered(GrisParams),
    Am(AmParams),
    Malta(MaltaParams),
    Tmala(TmalaParams),
    Hmc(HmcParams),
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig::default_for("gris").expect("gris is a known algorithm")
    }
}

impl AlgorithmConfig {
    pub const NAMES: [&'static str; 6] = ["gris", "gris_tempered", "am", "malta", "tmala", "hmc"];

    pub fn default_for(name: &str) -> anyhow::Result<Self> {
        #[derive(Deserialize)]
        struct Wrap {
            algorithm: AlgorithmConfig,
        }
        let w: Wrap = toml::from_str(&format!("[algorithm]\nname = \"{name}\"\n"))
            .with_context(|| format!("unknown algorithm {name:?}; expected one of {:?}", Self::NAMES))?;
        Ok(match w.algorithm {
            AlgorithmConfig::GrisTempered(mut p) => {
                p.tempering.get_or_insert_with(TemperingParams::default);
                AlgorithmConfig::GrisTempered(p)
            }
            other => other,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmConfig::Gris(_) => "gris",
            AlgorithmConfig::GrisTempered(_) => "gris_tempered",
            AlgorithmConfig::Am(_) => "am",
            AlgorithmConfig::Malta(_) => "malta",
            AlgorithmConfig::Tmala(_) => "tmala",
            AlgorithmConfig::Hmc(_) => "hmc",
        }
    }

    /// Whether the algorithm reports importance weights (and an evidence).
    pub fn is_importance_sampler(&self) -> bool {
        matches!(self, AlgorithmConfig::Gris(_) | AlgorithmConfig::GrisTempered(_))
    }

    /// Drift scale `δ`, for the algorithms that have one.
    pub fn delta_mut(&mut self) -> Option<&mut f64> {
        match self {
            AlgorithmConfig::Gris(p) | AlgorithmConfig::GrisTempered(p) => Some(&mut p.delta),
            AlgorithmConfig::Malta(p) => Some(&mut p.delta),
            AlgorithmConfig::Tmala(p) => Some(&mut p.delta),
            AlgorithmConfig::Am(_) | AlgorithmConfig::Hmc(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "defaults::eval_budget")]
    pub eval_budget: u64,
    #[serde(default = "defaults::n_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "defaults::stride")]
    pub checkpoint_stride: u64,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    /// Ground-truth JSON to use instead of computing one.
    #[serde(default)]
    pub truth_file: Option<PathBuf>,
    /// Worker threads for replicate runs; defaults to the machine's parallelism.
    #[serde(default)]
    pub jobs: Option<usize>,
    /// How target evaluations are spread within one GRIS iteration.
    #[serde(default)]
    pub execution: ExecutionName,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("all run fields have defaults")
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn default_for(target: &str, algorithm: &str) -> anyhow::Result<Self> {
        Ok(ExperimentConfig {
            target: TargetConfig::default_for(target)?,
            algorithm: AlgorithmConfig::default_for(algorithm)?,
            run: RunConfig::default(),
        })
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let run = &self.run;
        if run.n_runs == 0 {
            bail!("n_runs must be at least 1");
        }
        if run.jobs == Some(0) {
            bail!("jobs must be at least 1");
        }
        match &self.algorithm {
            AlgorithmConfig::Gris(p) | AlgorithmConfig::GrisTempered(p) => {
                if p.population < 2 {
                    bail!("population must be at least 2");
                }
                if run.eval_budget < 2 * p.population as u64 {
                    bail!("eval_budget {} is below twice the population {}", run.eval_budget, p.population);
                }
                if !(p.delta >= 0.0) {
                    bail!("delta must be non-negative");
                }
                if p.refresh_every == 0 {
                    bail!("refresh_every must be at least 1");
                }
                if matches!(self.algorithm, AlgorithmConfig::Gris(_)) && p.tempering.is_some() {
                    bail!("[algorithm.tempering] needs name = \"gris_tempered\"");
                }
                if let Some(t) = &p.tempering {
                    if t.steps == 0 || !(t.power > 0.0) || !(t.g0_var > 0.0) {
                        bail!("tempering needs steps >= 1, power > 0 and g0_var > 0");
                    }
                }
            }
            AlgorithmConfig::Hmc(h) => {
                if !(h.step_size > 0.0) || h.n_leapfrog == 0 {
                    bail!("hmc needs step_size > 0 and n_leapfrog >= 1");
                }
                if run.eval_budget < 1 + h.n_leapfrog as u64 {
                    bail!("eval_budget cannot pay for one HMC trajectory");
                }
            }
            AlgorithmConfig::Am(_) | AlgorithmConfig::Malta(_) | AlgorithmConfig::Tmala(_) => {
                if run.eval_budget < 2 {
                    bail!("eval_budget must be at least 2");
                }
            }
        }
        Ok(())
    }
}

mod defaults {
    use std::path::PathBuf;

    pub fn gaussian_mean() -> Vec<f64> {
        vec![0.0, 0.0]
    }
    pub fn gaussian_var() -> Vec<f64> {
        vec![1.0, 4.0]
    }
    pub fn grid_side() -> usize {
        5
    }
    pub fn grid_spacing() -> f64 {
        3.0
    }
    pub fn grid_decay() -> f64 {
        4.0
    }
    pub fn banana_b() -> f64 {
        0.03
    }
    pub fn banana_s() -> f64 {
        100.0
    }
    pub fn t_dim() -> usize {
        10
    }
    pub fn t_dof() -> f64 {
        10.0
    }
    pub fn t_weights() -> Vec<f64> {
        vec![0.5, 0.3, 0.2]
    }
    pub fn german_file() -> PathBuf {
        PathBuf::from("german.data-numeric")
    }
    pub fn prior_var() -> f64 {
        100.0
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn one_u64() -> u64 {
        1
    }
    pub fn one_usize() -> usize {
        1
    }
    pub fn temper_steps() -> usize {
        20
    }
    pub fn g0_var() -> f64 {
        4.0
    }
    pub fn population() -> usize {
        10
    }
    pub fn gris_delta() -> f64 {
        1.0
    }
    pub fn decay_exponent() -> f64 {
        1.5
    }
    pub fn drift_cap() -> Option<f64> {
        Some(10.0)
    }
    pub fn c0_scale() -> f64 {
        0.01
    }
    pub fn eps() -> f64 {
        1e-6
    }
    pub fn am_t0() -> usize {
        100
    }
    pub fn malta_delta() -> f64 {
        0.5
    }
    pub fn a1() -> f64 {
        1e4
    }
    pub fn gain_offset() -> f64 {
        10.0
    }
    pub fn hmc_step() -> f64 {
        0.1
    }
    pub fn hmc_leapfrog() -> usize {
        10
    }
    pub fn eval_budget() -> u64 {
        3000
    }
    pub fn n_runs() -> usize {
        20
    }
    pub fn stride() -> u64 {
        100
    }
    pub fn output_dir() -> PathBuf {
        PathBuf::from("out")
    }
}
