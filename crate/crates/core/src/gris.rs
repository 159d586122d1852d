//! Gradient importance sampling.
//!
//! Each iteration draws `p` ancestors uniformly from the last `p` resampled
//! samples, moves each with the drifted Gaussian proposal of the current
//! iteration, weights the new points by `f(x) / q_t(x | x')`, resamples `p`
//! of them back into the sample list, and feeds the resampled points to the
//! covariance adaptation. The raw weights give the evidence estimate
//! `Z ≈ mean(w)`.
//!
//! The tempered variant targets a bridge `g_t` between an easy initial
//! density `g0` and `f` for propagation, while recycling every proposed
//! point into a posterior estimate through the weight `f(x) / q_t(x | x')`.

use std::sync::Arc;

use rand::Rng;

use crate::adapt::{AdaptConfig, AdaptState};
use crate::checkpoint::{Checkpoint, CheckpointRecorder, RunningMoments, WeightedMoments};
use crate::exec::Execution;
use crate::linalg::{log_sum_exp, Factor};
use crate::proposal::{propose, proposal_logpdf, DriftConfig, ProposalParams};
use crate::resample::{resample, LogWeights, Scheme};
use crate::{Density, GrisError, Point, Result, RngStream, TargetModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Stop once `m` samples (beyond the `p` seeds) have been collected.
    SampleSize(usize),
    /// Stop before an iteration would push the evaluation count past the budget.
    EvalBudget(u64),
}

#[derive(Debug, Clone)]
pub struct GrisConfig {
    pub population: usize,
    pub stop: StopRule,
    pub drift: DriftConfig,
    pub adapt: AdaptConfig,
    pub scheme: Scheme,
    /// Evaluations between checkpoints; 0 disables checkpoints.
    pub checkpoint_stride: u64,
    pub execution: Execution,
}

impl GrisConfig {
    /// Defaults for a `dim`-dimensional target with population `p`.
    pub fn new(dim: usize, population: usize, stop: StopRule) -> Self {
        GrisConfig {
            population,
            stop,
            drift: DriftConfig::default(),
            adapt: AdaptConfig::defaults(dim, population),
            scheme: Scheme::Multinomial,
            checkpoint_stride: 100,
            execution: Execution::default(),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.population < 2 {
            return Err(GrisError::Contract("population must be at least 2".into()));
        }
        if self.drift.delta < 0.0 {
            return Err(GrisError::Contract("drift delta must be non-negative".into()));
        }
        if self.adapt.c0.nrows() != dim {
            return Err(GrisError::DimensionMismatch { expected: dim, got: self.adapt.c0.nrows() });
        }
        match self.stop {
            StopRule::SampleSize(0) => Err(GrisError::Contract("sample size must be positive".into())),
            StopRule::EvalBudget(b) if b < self.population as u64 => {
                Err(GrisError::Contract(format!("budget {b} cannot pay for {} seed evaluations", self.population)))
            }
            _ => Ok(()),
        }
    }
}

/// Estimates built from the `f / q` weights of a tempered run.
#[derive(Debug, Clone, PartialEq)]
pub struct RecycledTrace {
    pub log_weights: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub log_evidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    /// Resampled, unweighted samples with the seeds removed.
    pub samples: Vec<Point>,
    /// Every proposed point, in proposal order.
    pub proposals: Vec<Point>,
    /// Log importance weights of `proposals`, before resampling.
    pub raw_log_weights: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    pub iterations: usize,
    pub evals: u64,
    pub recycled: Option<RecycledTrace>,
}

impl SampleTrace {
    /// Mean and (population) variance of the resampled samples.
    pub fn resampled_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.samples.first().map_or(0, |x| x.len());
        let mut m = RunningMoments::new(d);
        for x in &self.samples {
            m.push(x);
        }
        (m.mean(), m.var())
    }

    /// Self-normalized importance sampling estimate from the raw weights.
    pub fn weighted_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.proposals.first().map_or(0, |x| x.len());
        let mut m = WeightedMoments::new(d);
        for (x, lw) in self.proposals.iter().zip(&self.raw_log_weights) {
            m.push(x, *lw);
        }
        (m.mean(), m.var())
    }

    pub fn log_evidence(&self) -> f64 {
        evidence(&self.raw_log_weights)
    }
}

/// `log (1/N Σ exp(log_w_i))`.
pub fn evidence(raw_log_weights: &[f64]) -> f64 {
    if raw_log_weights.is_empty() {
        return f64::NEG_INFINITY;
    }
    log_sum_exp(raw_log_weights) - (raw_log_weights.len() as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BridgeKind {
    /// `g_t ∝ g0^(1-ρ) f^ρ`
    Geometric,
    /// `g_t ∝ (1-ρ) g0 + ρ f`
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    Linear,
    Power(f64),
}

/// `ρ_1 .. ρ_T`, increasing with `ρ_T = 1`.
pub fn rho_schedule(steps: usize, kind: ScheduleKind) -> Vec<f64> {
    assert!(steps >= 1, "schedule needs at least one step");
    let n = steps as f64;
    (1..=steps)
        .map(|t| {
            let r = t as f64 / n;
            match kind {
                ScheduleKind::Linear => r,
                ScheduleKind::Power(a) => r.powf(a),
            }
        })
        .collect()
}

impl BridgeKind {
    /// `log g_t` from `log g0` and `log f` at inverse temperature `rho`.
    pub fn combine(self, rho: f64, log_g0: f64, log_f: f64) -> f64 {
        if rho == 1.0 {
            return log_f;
        }
        if rho == 0.0 {
            return log_g0;
        }
        match self {
            BridgeKind::Geometric => (1.0 - rho) * log_g0 + rho * log_f,
            BridgeKind::Mixture => log_sum_exp(&[(1.0 - rho).ln() + log_g0, rho.ln() + log_f]),
        }
    }

    /// `∇ log g_t`.
    pub fn combine_grad(self, rho: f64, g0: (f64, &Point), f: (f64, &Point)) -> Point {
        if rho == 1.0 {
            return f.1.clone();
        }
        if rho == 0.0 {
            return g0.1.clone();
        }
        match self {
            BridgeKind::Geometric => g0.1 * (1.0 - rho) + f.1 * rho,
            BridgeKind::Mixture => {
                let a = (1.0 - rho).ln() + g0.0;
                let b = rho.ln() + f.0;
                let total = log_sum_exp(&[a, b]);
                let r = if total == f64::NEG_INFINITY { 0.5 } else { (a - total).exp() };
                g0.1 * r + f.1 * (1.0 - r)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BridgeSpec {
    pub kind: BridgeKind,
    /// Normalized initial density.
    pub g0: Arc<dyn Density>,
    pub schedule: Vec<f64>,
}

impl BridgeSpec {
    pub fn new(kind: BridgeKind, g0: Arc<dyn Density>, schedule: Vec<f64>) -> Result<Self> {
        let increasing = schedule.windows(2).all(|w| w[0] < w[1]);
        let in_range = schedule.iter().all(|r| *r > 0.0 && *r <= 1.0);
        if schedule.is_empty() || !increasing || !in_range || *schedule.last().unwrap() != 1.0 {
            return Err(GrisError::Contract("schedule must increase within (0, 1] and end at 1".into()));
        }
        Ok(BridgeSpec { kind, g0, schedule })
    }

    /// `ρ_t` for iteration `t >= 1`; 1 after the schedule ends.
    pub fn rho(&self, t: usize) -> f64 {
        self.schedule.get(t.saturating_sub(1)).copied().unwrap_or(1.0)
    }

    /// `(log g_t(x), log f(x))`, uncounted.
    pub fn bridge_logdensity(&self, t: usize, x: &Point, f: &dyn Density) -> (f64, f64) {
        let lf = f.log_density(x);
        (self.kind.combine(self.rho(t), self.g0.log_density(x), lf), lf)
    }
}

#[derive(Debug, Clone)]
struct Particle {
    x: Point,
    logf: f64,
    grad: Point,
    /// `(log g0, ∇log g0)` in tempered runs.
    g0: Option<(f64, Point)>,
}

impl Particle {
    fn drift_grad(&self, bridge: Option<&BridgeSpec>, t: usize) -> Point {
        match (bridge, &self.g0) {
            (Some(b), Some((lg, gg))) => b.kind.combine_grad(b.rho(t), (*lg, gg), (self.logf, &self.grad)),
            _ => self.grad.clone(),
        }
    }

    fn log_target(&self, bridge: Option<&BridgeSpec>, t: usize) -> f64 {
        match (bridge, &self.g0) {
            (Some(b), Some((lg, _))) => b.kind.combine(b.rho(t), *lg, self.logf),
            _ => self.logf,
        }
    }
}

/// `p` i.i.d. draws from `N(start, C0)`.
pub fn init_particles(start: &Point, c0: &Factor, population: usize, rng: &mut RngStream) -> Vec<Point> {
    (0..population).map(|_| c0.sample(start, rng)).collect()
}

pub fn gris_run(target: &mut TargetModel, cfg: &GrisConfig, init: &[Point], rng: &mut RngStream) -> Result<SampleTrace> {
    run(target, cfg, init, rng, None)
}

pub fn tempered_gris_run(
    target: &mut TargetModel,
    bridge: &BridgeSpec,
    cfg: &GrisConfig,
    init: &[Point],
    rng: &mut RngStream,
) -> Result<SampleTrace> {
    if bridge.g0.dim() != target.dim() {
        return Err(GrisError::DimensionMismatch { expected: target.dim(), got: bridge.g0.dim() });
    }
    run(target, cfg, init, rng, Some(bridge))
}

fn nan_to_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn run(
    target: &mut TargetModel,
    cfg: &GrisConfig,
    init: &[Point],
    rng: &mut RngStream,
    bridge: Option<&BridgeSpec>,
) -> Result<SampleTrace> {
    let d = target.dim();
    let p = cfg.population;
    cfg.validate(d)?;
    if init.len() != p {
        return Err(GrisError::Contract(format!("expected {p} initial points, got {}", init.len())));
    }
    let g0_eval = |x: &Point| bridge.map(|b| b.g0.log_density_grad(x));

    let seeds = target.eval_batch(init, cfg.execution)?;
    let mut samples: Vec<Particle> = Vec::with_capacity(p * 8);
    let mut seed_moments = RunningMoments::new(d);
    for (x, (logf, grad)) in init.iter().zip(seeds) {
        if !logf.is_finite() {
            return Err(GrisError::Contract("initial point has zero or non-finite target density".into()));
        }
        seed_moments.push(x);
        samples.push(Particle { x: x.clone(), logf, grad, g0: g0_eval(x) });
    }

    let mut adapt = AdaptState::new(cfg.adapt.clone())?;
    adapt.observe_batch(init)?;

    let mut moments = RunningMoments::new(d);
    let mut weighted = WeightedMoments::new(d);
    let mut recycled_w = bridge.map(|_| WeightedMoments::new(d));
    let mut recorder = CheckpointRecorder::new(cfg.checkpoint_stride);
    let mut recycled_rec = bridge.map(|_| CheckpointRecorder::new(cfg.checkpoint_stride));
    let mut proposals = Vec::new();
    let mut raw_log_weights = Vec::new();
    let mut recycled_log_weights = Vec::new();
    let mut iterations = 0;

    let main_estimate = |moments: &RunningMoments, weighted: &WeightedMoments| {
        let src = if moments.count() > 0 { moments } else { &seed_moments };
        let ev = (weighted.count() > 0).then(|| weighted.log_evidence());
        (src.mean(), src.var(), ev)
    };
    let recycled_estimate = |w: &WeightedMoments| {
        if w.has_mass() {
            (w.mean(), w.var(), Some(w.log_evidence()))
        } else {
            (seed_moments.mean(), seed_moments.var(), None)
        }
    };

    loop {
        let proceed = match cfg.stop {
            StopRule::SampleSize(m) => samples.len() < m + p,
            StopRule::EvalBudget(b) => target.evals() + p as u64 <= b,
        };
        if !proceed {
            break;
        }
        let t = iterations + 1;
        let now = target.evals();
        recorder.before_step(now, p as u64, || main_estimate(&moments, &weighted));
        if let (Some(rec), Some(w)) = (recycled_rec.as_mut(), recycled_w.as_ref()) {
            rec.before_step(now, p as u64, || recycled_estimate(w));
        }

        let factor = adapt.factor();
        let window = samples.len() - p..samples.len();
        let mut xs = Vec::with_capacity(p);
        let mut log_q = Vec::with_capacity(p);
        for _ in 0..p {
            let ancestor = &samples[rng.random_range(window.clone())];
            let grad = ancestor.drift_grad(bridge, t);
            let params = ProposalParams::langevin(ancestor.x.clone(), &grad, t, &cfg.drift, factor);
            let x = propose(&params, rng);
            log_q.push(proposal_logpdf(&x, &params));
            xs.push(x);
        }

        let evals = target.eval_batch(&xs, cfg.execution)?;
        let batch: Vec<Particle> = xs
            .into_iter()
            .zip(evals)
            .map(|(x, (logf, grad))| {
                let g0 = g0_eval(&x);
                Particle { logf: nan_to_neg_inf(logf), g0, x, grad }
            })
            .collect();

        let prop_w: Vec<f64> = batch.iter().zip(&log_q).map(|(q, lq)| nan_to_neg_inf(q.log_target(bridge, t) - lq)).collect();
        let ancestors = resample(cfg.scheme, &LogWeights(prop_w.clone()), p, rng)?;

        for (q, lw) in batch.iter().zip(&prop_w) {
            weighted.push(&q.x, *lw);
        }
        if let Some(rw) = recycled_w.as_mut() {
            for (q, lq) in batch.iter().zip(&log_q) {
                let lw = nan_to_neg_inf(q.logf - lq);
                rw.push(&q.x, lw);
                recycled_log_weights.push(lw);
            }
        }

        let start = samples.len();
        for &i in &ancestors {
            moments.push(&batch[i].x);
            samples.push(batch[i].clone());
        }
        adapt.observe_batch(samples[start..].iter().map(|q| &q.x))?;

        for q in batch {
            proposals.push(q.x);
        }
        raw_log_weights.extend(prop_w);
        iterations = t;
    }

    let limit = match cfg.stop {
        StopRule::EvalBudget(b) => b,
        StopRule::SampleSize(_) => target.evals(),
    };
    let checkpoints = recorder.finish(limit, || main_estimate(&moments, &weighted));
    let recycled = match (recycled_rec, recycled_w) {
        (Some(mut rec), Some(w)) => {
            let cps = rec.finish(limit, || recycled_estimate(&w));
            let (mean, var, _) = recycled_estimate(&w);
            Some(RecycledTrace { log_weights: recycled_log_weights, checkpoints: cps, mean, var, log_evidence: w.log_evidence() })
        }
        _ => None,
    };

    Ok(SampleTrace {
        samples: samples.into_iter().skip(p).map(|q| q.x).collect(),
        proposals,
        raw_log_weights,
        checkpoints,
        iterations,
        evals: target.evals(),
        recycled,
    })
}
