//! Comparison samplers: adaptive Metropolis, MALTA, adaptive truncated MALA
//! and HMC. All are Metropolis–Hastings chains that record the current
//! state after every step, accepted or not.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::adapt::AdaptState;
use crate::checkpoint::{Checkpoint, CheckpointRecorder, RunningMoments};
use crate::gris::StopRule;
use crate::linalg::{standard_normal, Factor};
use crate::proposal::{truncate_drift, DriftConfig};
use crate::{GrisError, Point, Result, RngStream, TargetModel};

/// Optimal acceptance rate targeted by the T-MALA scale adaptation.
pub const MALA_TARGET_ACCEPT: f64 = 0.574;

#[derive(Debug, Clone)]
pub struct MhChainState {
    pub current: Point,
    pub current_logf: f64,
    pub current_grad: Option<Point>,
    pub accepted: u64,
    pub steps: u64,
}

impl MhChainState {
    /// Evaluates the start point (one evaluation, gradient included).
    pub fn start(target: &mut TargetModel, x: Point) -> Result<Self> {
        let (logf, grad) = target.counted_eval(&x, true)?;
        if !logf.is_finite() {
            return Err(GrisError::Contract("chain start has zero or non-finite density".into()));
        }
        Ok(MhChainState { current: x, current_logf: logf, current_grad: grad, accepted: 0, steps: 0 })
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }

    fn grad(&self) -> &Point {
        self.current_grad.as_ref().expect("gradient cached at the current state")
    }

    fn record(&mut self, accepted: bool, x: Point, logf: f64, grad: Option<Point>) {
        self.steps += 1;
        if accepted {
            self.accepted += 1;
            self.current = x;
            self.current_logf = logf;
            self.current_grad = grad;
        }
    }
}

/// `log f(x_prop) - log f(x_cur) + log q(x_cur | x_prop) - log q(x_prop | x_cur)`.
pub fn mh_log_ratio(logf_cur: f64, logf_prop: f64, logq_fwd: f64, logq_rev: f64) -> f64 {
    if logf_prop == f64::NEG_INFINITY || logf_prop.is_nan() {
        return f64::NEG_INFINITY;
    }
    (logf_prop - logf_cur) + (logq_rev - logq_fwd)
}

/// Metropolis–Hastings acceptance with probability `min(1, exp(ratio))`.
/// Always consumes one uniform draw.
pub fn mh_accept(logf_cur: f64, logf_prop: f64, logq_fwd: f64, logq_rev: f64, rng: &mut impl Rng) -> bool {
    let u: f64 = rng.random();
    let r = mh_log_ratio(logf_cur, logf_prop, logq_fwd, logq_rev);
    r >= 0.0 || u.ln() < r
}

/// One adaptive Metropolis step: `N(current, C_t)` proposal, then the
/// recorded sample is fed to the covariance adaptation.
pub fn am_step(state: &mut MhChainState, adapt: &mut AdaptState, target: &mut TargetModel, rng: &mut RngStream) -> Result<()> {
    let prop = adapt.factor().sample(&state.current, rng);
    let (logf, _) = target.counted_eval(&prop, false)?;
    let ok = mh_accept(state.current_logf, logf, 0.0, 0.0, rng);
    state.record(ok, prop, logf, None);
    adapt.observe(&state.current)
}

fn langevin_mean(x: &Point, grad: &Point, drift: &DriftConfig, factor: &Factor) -> Point {
    let d = if drift.delta == 0.0 { Point::zeros(x.len()) } else { grad * drift.delta };
    x + truncate_drift(d, factor, drift.cap_factor)
}

/// One MALTA step with fixed covariance and drift `δ ∇log f`, truncated.
pub fn malta_step(state: &mut MhChainState, factor: &Factor, drift: &DriftConfig, target: &mut TargetModel, rng: &mut RngStream) -> Result<()> {
    let fwd_mean = langevin_mean(&state.current, state.grad(), drift, factor);
    let prop = factor.sample(&fwd_mean, rng);
    let (logf, grad) = target.counted_eval(&prop, true)?;
    let grad = grad.expect("requested gradient");
    let rev_mean = langevin_mean(&prop, &grad, drift, factor);
    let logq_fwd = factor.gaussian_logpdf(&prop, &fwd_mean);
    let logq_rev = factor.gaussian_logpdf(&state.current, &rev_mean);
    let ok = mh_accept(state.current_logf, logf, logq_fwd, logq_rev, rng);
    state.record(ok, prop, logf, Some(grad));
    Ok(())
}

/// `C` if `‖C‖_F <= A1`, else `C · A1 / ‖C‖_F`.
pub fn frobenius_project(c: &DMatrix<f64>, a1: f64) -> DMatrix<f64> {
    let norm = c.norm();
    if norm <= a1 {
        c.clone()
    } else {
        c * (a1 / norm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TmalaConfig {
    pub delta: f64,
    pub cap_factor: Option<f64>,
    pub a1: f64,
    pub s_d: f64,
    pub eps: f64,
    /// Offset of the step-size sequence `γ_t = (t + offset)^-0.6`.
    pub gain_offset: f64,
}

impl TmalaConfig {
    pub fn defaults(dim: usize) -> Self {
        TmalaConfig { delta: 1.0, cap_factor: Some(10.0), a1: 1e4, s_d: 2.38 * 2.38 / dim as f64, eps: 1e-6, gain_offset: 10.0 }
    }
}

/// Adapted mean, covariance and scale of the T-MALA proposal
/// `N(x + (C/2) D(x), C)` with `C = s_d · (cov + ε I)`.
#[derive(Debug, Clone)]
pub struct TmalaAdaptState {
    pub cfg: TmalaConfig,
    pub cov: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub s_d: f64,
    t: u64,
    factor: Factor,
    scale: DMatrix<f64>,
}

impl TmalaAdaptState {
    pub fn new(cfg: TmalaConfig, mean: DVector<f64>, cov0: DMatrix<f64>) -> Result<Self> {
        let cov = frobenius_project(&cov0, cfg.a1);
        let s_d = cfg.s_d.clamp(1e-4, cfg.a1);
        let mut st = TmalaAdaptState { cov, mean, s_d, t: 0, factor: Factor::identity(cov0.nrows()), scale: cov0, cfg };
        st.refresh()?;
        Ok(st)
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    pub fn factor(&self) -> &Factor {
        &self.factor
    }

    fn refresh(&mut self) -> Result<()> {
        let d = self.cov.nrows();
        self.scale = (&self.cov + DMatrix::identity(d, d) * self.cfg.eps) * self.s_d;
        self.factor = Factor::from_cov(&self.scale, 1e-10 * (self.scale.trace() / d as f64).max(1e-300), "T-MALA C_t")?;
        Ok(())
    }

    /// `x + (C/2) D(x)`, with `D(x)` the truncated `δ ∇log f(x)`.
    pub fn proposal_mean(&self, x: &Point, grad: &Point) -> Point {
        let drift = DriftConfig { delta: self.cfg.delta, decay_exponent: 0.0, cap_factor: self.cfg.cap_factor };
        if drift.delta == 0.0 {
            return x + Point::zeros(x.len());
        }
        let d = truncate_drift(grad * drift.delta, &self.factor, drift.cap_factor);
        x + &self.scale * d * 0.5
    }

    /// Stochastic-approximation update from the recorded sample and the
    /// step's acceptance probability, followed by the projections.
    pub fn adapt(&mut self, x: &Point, accept_prob: f64) -> Result<()> {
        self.t += 1;
        let gamma = (self.t as f64 + self.cfg.gain_offset).powf(-0.6);
        let dev = x - &self.mean;
        self.cov = &self.cov + (&dev * dev.transpose() - &self.cov) * gamma;
        self.cov = frobenius_project(&self.cov, self.cfg.a1);
        self.mean += dev * gamma;
        self.s_d = (self.s_d + gamma * (accept_prob - MALA_TARGET_ACCEPT)).clamp(1e-4, self.cfg.a1);
        self.refresh()
    }
}

pub fn tmala_step(state: &mut MhChainState, ts: &mut TmalaAdaptState, target: &mut TargetModel, rng: &mut RngStream) -> Result<()> {
    let fwd_mean = ts.proposal_mean(&state.current, state.grad());
    let prop = ts.factor().sample(&fwd_mean, rng);
    let (logf, grad) = target.counted_eval(&prop, true)?;
    let grad = grad.expect("requested gradient");
    let rev_mean = ts.proposal_mean(&prop, &grad);
    let logq_fwd = ts.factor().gaussian_logpdf(&prop, &fwd_mean);
    let logq_rev = ts.factor().gaussian_logpdf(&state.current, &rev_mean);
    let ratio = mh_log_ratio(state.current_logf, logf, logq_fwd, logq_rev);
    let ok = mh_accept(state.current_logf, logf, logq_fwd, logq_rev, rng);
    state.record(ok, prop, logf, Some(grad));
    let alpha = if ratio >= 0.0 { 1.0 } else { ratio.exp() };
    ts.adapt(&state.current, alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmcConfig {
    pub step_size: f64,
    pub n_leapfrog: usize,
    /// Diagonal of the mass matrix.
    pub mass: DVector<f64>,
}

impl HmcConfig {
    pub fn new(dim: usize, step_size: f64, n_leapfrog: usize) -> Self {
        HmcConfig { step_size, n_leapfrog, mass: DVector::from_element(dim, 1.0) }
    }
}

/// End state of a leapfrog trajectory.
#[derive(Debug, Clone)]
pub struct LeapfrogEnd {
    pub x: Point,
    pub momentum: DVector<f64>,
    pub logf: f64,
    pub grad: Point,
}

/// Leapfrog integration with diagonal inverse mass. `start` carries
/// `(log f, ∇log f)` at `x`; `grad_fn` is called once per position update.
/// Returns `None` when a non-finite density or gradient is met.
pub fn leapfrog<F>(
    x: &Point,
    momentum: &DVector<f64>,
    start: (f64, &Point),
    mut grad_fn: F,
    step_size: f64,
    n_steps: usize,
    inv_mass: &DVector<f64>,
) -> Result<Option<LeapfrogEnd>>
where
    F: FnMut(&Point) -> Result<(f64, Point)>,
{
    let mut x = x.clone();
    let mut p = momentum.clone();
    let (mut logf, mut grad) = (start.0, start.1.clone());
    if n_steps == 0 {
        return Ok(Some(LeapfrogEnd { x, momentum: p, logf, grad }));
    }
    p += &grad * (0.5 * step_size);
    for i in 0..n_steps {
        x += inv_mass.component_mul(&p) * step_size;
        let (l, g) = grad_fn(&x)?;
        if !l.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        logf = l;
        grad = g;
        let kick = if i + 1 == n_steps { 0.5 } else { 1.0 };
        p += &grad * (kick * step_size);
    }
    Ok(Some(LeapfrogEnd { x, momentum: p, logf, grad }))
}

fn kinetic(p: &DVector<f64>, inv_mass: &DVector<f64>) -> f64 {
    0.5 * p.component_mul(p).dot(inv_mass)
}

/// One HMC transition. Costs `n_leapfrog` evaluations.
pub fn hmc_step(state: &mut MhChainState, cfg: &HmcConfig, target: &mut TargetModel, rng: &mut RngStream) -> Result<()> {
    let d = state.current.len();
    let inv_mass = cfg.mass.map(|m| 1.0 / m);
    let p0 = standard_normal(d, rng).component_mul(&cfg.mass.map(f64::sqrt));
    let grad0 = state.grad().clone();
    let end = leapfrog(
        &state.current,
        &p0,
        (state.current_logf, &grad0),
        |x| {
            let (l, g) = target.counted_eval(x, true)?;
            Ok((l, g.expect("requested gradient")))
        },
        cfg.step_size,
        cfg.n_leapfrog,
        &inv_mass,
    )?;
    match end {
        Some(end) => {
            let k0 = kinetic(&p0, &inv_mass);
            let k1 = kinetic(&end.momentum, &inv_mass);
            let ok = mh_accept(state.current_logf, end.logf, k1, k0, rng);
            state.record(ok, end.x, end.logf, Some(end.grad));
        }
        None => state.record(false, state.current.clone(), 0.0, None),
    }
    Ok(())
}

/// A baseline transition kernel together with its adaptive state.
#[derive(Debug, Clone)]
pub enum Kernel {
    Am(AdaptState),
    Malta { factor: Factor, drift: DriftConfig },
    Tmala(TmalaAdaptState),
    Hmc(HmcConfig),
}

impl Kernel {
    pub fn cost_per_step(&self) -> u64 {
        match self {
            Kernel::Hmc(c) => c.n_leapfrog as u64,
            _ => 1,
        }
    }

    pub fn step(&mut self, state: &mut MhChainState, target: &mut TargetModel, rng: &mut RngStream) -> Result<()> {
        match self {
            Kernel::Am(a) => am_step(state, a, target, rng),
            Kernel::Malta { factor, drift } => malta_step(state, factor, drift, target, rng),
            Kernel::Tmala(ts) => tmala_step(state, ts, target, rng),
            Kernel::Hmc(cfg) => hmc_step(state, cfg, target, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub samples: Vec<Point>,
    pub checkpoints: Vec<Checkpoint>,
    pub accepted: u64,
    pub steps: u64,
    pub evals: u64,
}

impl ChainTrace {
    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }

    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.samples.first().map_or(0, |x| x.len());
        let mut m = RunningMoments::new(d);
        for x in &self.samples {
            m.push(x);
        }
        (m.mean(), m.var())
    }
}

/// Runs a chain from `start` (whose evaluation counts) until `stop`:
/// `SampleSize(n)` means `n` steps.
pub fn run_chain(
    target: &mut TargetModel,
    kernel: &mut Kernel,
    start: Point,
    stop: StopRule,
    checkpoint_stride: u64,
    rng: &mut RngStream,
) -> Result<ChainTrace> {
    let cost = kernel.cost_per_step();
    if let StopRule::EvalBudget(b) = stop {
        if b == 0 {
            return Err(GrisError::Contract("budget cannot pay for the start point".into()));
        }
    }
    let mut state = MhChainState::start(target, start)?;
    let d = target.dim();
    let mut moments = RunningMoments::new(d);
    let mut recorder = CheckpointRecorder::new(checkpoint_stride);
    let mut samples = Vec::new();
    let start_est = (state.current.iter().copied().collect::<Vec<_>>(), vec![0.0; d], None);
    let estimate = |m: &RunningMoments| if m.count() > 0 { (m.mean(), m.var(), None) } else { start_est.clone() };
    loop {
        let proceed = match stop {
            StopRule::SampleSize(n) => (samples.len() as u64) < n as u64,
            StopRule::EvalBudget(b) => target.evals() + cost <= b,
        };
        if !proceed {
            break;
        }
        recorder.before_step(target.evals(), cost, || estimate(&moments));
        kernel.step(&mut state, target, rng)?;
        moments.push(&state.current);
        samples.push(state.current.clone());
    }
    let limit = match stop {
        StopRule::EvalBudget(b) => b,
        StopRule::SampleSize(_) => target.evals(),
    };
    let checkpoints = recorder.finish(limit, || estimate(&moments));
    Ok(ChainTrace { samples, checkpoints, accepted: state.accepted, steps: state.steps, evals: target.evals() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::AdaptConfig;
    use crate::model::derive_run_stream;
    use crate::targets::Gaussian;
    use crate::Density;
    use approx::assert_abs_diff_eq;

    fn correlated() -> (Gaussian, DVector<f64>, DMatrix<f64>) {
        let mean = DVector::from_vec(vec![1.0, -1.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        (Gaussian::new(mean.clone(), &cov).unwrap(), mean, cov)
    }

    #[test]
    fn mh_ratio_examples() {
        assert_eq!(mh_log_ratio(-1.0, -1.0, 0.0, 0.0), 0.0);
        assert_abs_diff_eq!(mh_log_ratio(-1.0, -3.0, -0.5, -0.2), -1.7, epsilon = 1e-15);
        assert_eq!(mh_log_ratio(-1.0, f64::NEG_INFINITY, 0.0, 0.0), f64::NEG_INFINITY);
        assert_eq!(mh_log_ratio(-1.0, f64::NAN, 0.0, 0.0), f64::NEG_INFINITY);
        let mut rng = derive_run_stream(0, 0);
        for _ in 0..100 {
            assert!(mh_accept(-1.0, 0.0, 0.0, 0.0, &mut rng));
            assert!(!mh_accept(-1.0, f64::NEG_INFINITY, 0.0, 0.0, &mut rng));
        }
    }

    #[test]
    fn mh_acceptance_frequency() {
        let mut rng = derive_run_stream(1, 0);
        let n = 100_000;
        let hits = (0..n).filter(|_| mh_accept(0.0, 0.3f64.ln(), 0.0, 0.0, &mut rng)).count();
        let p = hits as f64 / n as f64;
        assert!((p - 0.3).abs() < 5.0 * (0.3f64 * 0.7 / n as f64).sqrt());
    }

    #[test]
    fn frobenius_projection() {
        let c = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 4.0]);
        assert_eq!(frobenius_project(&c, 10.0), c);
        let p = frobenius_project(&c, 1.0);
        assert_abs_diff_eq!(p.norm(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[(1, 1)], 0.8, epsilon = 1e-15);
    }

    fn std_normal_grad(x: &Point) -> Result<(f64, Point)> {
        Ok((-0.5 * x.norm_squared(), -x))
    }

    #[test]
    fn leapfrog_is_reversible() {
        let x = DVector::from_vec(vec![0.7, -1.3, 0.2]);
        let p = DVector::from_vec(vec![0.1, 0.9, -0.4]);
        let inv_mass = DVector::from_vec(vec![1.0, 0.5, 2.0]);
        let (l, g) = std_normal_grad(&x).unwrap();
        let end = leapfrog(&x, &p, (l, &g), std_normal_grad, 0.1, 25, &inv_mass).unwrap().unwrap();
        let back = leapfrog(&end.x, &-&end.momentum, (end.logf, &end.grad), std_normal_grad, 0.1, 25, &inv_mass).unwrap().unwrap();
        assert!((back.x - x).norm() < 1e-12);
        assert!((back.momentum + p).norm() < 1e-12);
    }

    #[test]
    fn leapfrog_energy_error_shrinks_quadratically() {
        let x = DVector::from_vec(vec![1.0, 0.5]);
        let p = DVector::from_vec(vec![-0.3, 1.2]);
        let ones = DVector::from_element(2, 1.0);
        let h0 = 0.5 * x.norm_squared() + 0.5 * p.norm_squared();
        let err = |eps: f64| {
            let (l, g) = std_normal_grad(&x).unwrap();
            let n = (1.0 / eps).round() as usize;
            let e = leapfrog(&x, &p, (l, &g), std_normal_grad, eps, n, &ones).unwrap().unwrap();
            (-e.logf + 0.5 * e.momentum.norm_squared() - h0).abs()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(e1 < 1e-2);
        assert!(e1 / e2 > 3.0 && e1 / e2 < 5.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn leapfrog_detects_divergence() {
        let x = DVector::from_vec(vec![1.0]);
        let p = DVector::from_vec(vec![1.0]);
        let bad = |_: &Point| Ok((f64::NAN, DVector::from_vec(vec![0.0])));
        let r = leapfrog(&x, &p, (0.0, &DVector::from_vec(vec![-1.0])), bad, 0.1, 3, &DVector::from_element(1, 1.0)).unwrap();
        assert!(r.is_none());
    }

    fn frozen_am(c0: DMatrix<f64>) -> AdaptState {
        let cfg = AdaptConfig { t0: usize::MAX, c0, s_d: 1.0, eps: 0.0, refresh_every: 1 };
        AdaptState::new(cfg).unwrap()
    }

    #[test]
    fn malta_without_drift_is_frozen_am() {
        let (g, mean, _) = correlated();
        let c0 = DMatrix::identity(2, 2) * 0.8;
        let mut am = Kernel::Am(frozen_am(c0.clone()));
        let mut malta = Kernel::Malta { factor: Factor::from_cov(&c0, 0.0, "c0").unwrap(), drift: DriftConfig::with_delta(0.0) };
        let run = |k: &mut Kernel| {
            let mut target = TargetModel::from_density(g.clone());
            run_chain(&mut target, k, mean.clone(), StopRule::SampleSize(500), 100, &mut derive_run_stream(3, 0)).unwrap()
        };
        let a = run(&mut am);
        let b = run(&mut malta);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.accepted, b.accepted);
    }

    fn assert_moments(trace: &ChainTrace, mean: &DVector<f64>, cov: &DMatrix<f64>, tol: f64) {
        let (m, v) = trace.moments();
        for j in 0..mean.len() {
            assert!((m[j] - mean[j]).abs() < tol * cov[(j, j)].sqrt(), "mean {j}: {} vs {}", m[j], mean[j]);
            assert!((v[j] / cov[(j, j)] - 1.0).abs() < 2.0 * tol, "var {j}: {} vs {}", v[j], cov[(j, j)]);
        }
    }

    #[test]
    fn baselines_recover_gaussian_moments() {
        let (g, mean, cov) = correlated();
        let start = mean.clone();
        let am = Kernel::Am(AdaptState::new(AdaptConfig::defaults(2, 1)).unwrap());
        let malta = Kernel::Malta { factor: Factor::from_cov(&(cov.clone() * 0.8), 0.0, "c").unwrap(), drift: DriftConfig::with_delta(0.4) };
        let tmala = Kernel::Tmala(TmalaAdaptState::new(TmalaConfig::defaults(2), mean.clone(), DMatrix::identity(2, 2)).unwrap());
        let hmc = Kernel::Hmc(HmcConfig::new(2, 0.3, 10));
        for (i, mut k) in [am, malta, tmala, hmc].into_iter().enumerate() {
            let mut target = TargetModel::from_density(g.clone());
            let n = if i == 3 { 20_000 } else { 100_000 };
            let tr = run_chain(&mut target, &mut k, start.clone(), StopRule::SampleSize(n), 0, &mut derive_run_stream(7, i as u64)).unwrap();
            assert!(tr.acceptance_rate() > 0.1 && tr.acceptance_rate() < 1.0, "kernel {i}: {}", tr.acceptance_rate());
            assert_moments(&tr, &mean, &cov, 0.05);
        }
    }

    #[test]
    fn tmala_scale_adapts_toward_target_acceptance() {
        let (g, mean, _) = correlated();
        let cfg = TmalaConfig { s_d: 20.0, ..TmalaConfig::defaults(2) };
        let mut k = Kernel::Tmala(TmalaAdaptState::new(cfg, mean.clone(), DMatrix::identity(2, 2)).unwrap());
        let mut target = TargetModel::from_density(g);
        let tr = run_chain(&mut target, &mut k, mean, StopRule::SampleSize(50_000), 0, &mut derive_run_stream(2, 0)).unwrap();
        let Kernel::Tmala(ts) = &k else { unreachable!() };
        assert!(ts.s_d < 20.0);
        let late = tr.acceptance_rate();
        assert!((late - MALA_TARGET_ACCEPT).abs() < 0.1, "{late}");
    }

    #[test]
    fn chain_respects_budget_and_checkpoints() {
        let (g, mean, _) = correlated();
        for (mut k, cost) in [(Kernel::Hmc(HmcConfig::new(2, 0.2, 7)), 7), (Kernel::Am(frozen_am(DMatrix::identity(2, 2))), 1)] {
            let mut target = TargetModel::from_density(g.clone());
            let tr = run_chain(&mut target, &mut k, mean.clone(), StopRule::EvalBudget(1000), 100, &mut derive_run_stream(1, 0)).unwrap();
            assert!(tr.evals <= 1000);
            assert!(tr.evals + cost > 1000);
            assert_eq!(tr.steps as usize, tr.samples.len());
            let at: Vec<u64> = tr.checkpoints.iter().map(|c| c.eval_count).collect();
            assert_eq!(at, (1..=10).map(|i| i * 100).collect::<Vec<_>>());
        }
        let mut k = Kernel::Am(frozen_am(DMatrix::identity(2, 2)));
        let mut target = TargetModel::from_density(g);
        assert!(run_chain(&mut target, &mut k, mean, StopRule::EvalBudget(0), 100, &mut derive_run_stream(1, 0)).is_err());
    }

    #[test]
    fn chains_are_deterministic() {
        let (g, mean, _) = correlated();
        let run = || {
            let mut k = Kernel::Tmala(TmalaAdaptState::new(TmalaConfig::defaults(2), mean.clone(), DMatrix::identity(2, 2)).unwrap());
            let mut target = TargetModel::from_density(g.clone());
            run_chain(&mut target, &mut k, mean.clone(), StopRule::SampleSize(300), 50, &mut derive_run_stream(8, 2)).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn hand_computed_proposal_means() {
        let f = Factor::identity(1);
        let m = langevin_mean(&DVector::from_element(1, 2.0), &DVector::from_element(1, -2.0), &DriftConfig::with_delta(0.5), &f);
        assert_eq!(m[0], 1.0);
        let cfg = TmalaConfig { delta: 1.0, s_d: 1.0, eps: 0.0, ..TmalaConfig::defaults(1) };
        let ts = TmalaAdaptState::new(cfg, DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let m = ts.proposal_mean(&DVector::from_element(1, 2.0), &DVector::from_element(1, -2.0));
        assert_eq!(m[0], 1.0);
    }

    #[test]
    fn malta_kernel_is_asymmetric() {
        let (g, _, _) = correlated();
        let f = Factor::identity(2);
        let drift = DriftConfig::with_delta(0.5);
        let x = DVector::from_vec(vec![0.3, 2.0]);
        let y = DVector::from_vec(vec![-1.0, 0.4]);
        let fwd = f.gaussian_logpdf(&y, &langevin_mean(&x, &g.log_density_grad(&x).1, &drift, &f));
        let rev = f.gaussian_logpdf(&x, &langevin_mean(&y, &g.log_density_grad(&y).1, &drift, &f));
        assert!((fwd - rev).abs() > 1e-3);
    }

    #[test]
    fn projection_examples() {
        let p = frobenius_project(&(DMatrix::identity(2, 2) * 2.0), 2.0);
        assert_abs_diff_eq!(p, DMatrix::identity(2, 2) * 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(frobenius_project(&p, 2.0), p, epsilon = 1e-15);
    }

    #[test]
    fn tmala_covariance_stays_projected() {
        let (g, mean, _) = correlated();
        let cfg = TmalaConfig { a1: 1.5, ..TmalaConfig::defaults(2) };
        let mut ts = TmalaAdaptState::new(cfg, mean.clone(), DMatrix::identity(2, 2) * 5.0).unwrap();
        assert!(ts.cov.norm() <= 1.5 + 1e-12);
        let mut target = TargetModel::from_density(g);
        let mut state = MhChainState::start(&mut target, mean).unwrap();
        let mut rng = derive_run_stream(4, 0);
        for _ in 0..2000 {
            tmala_step(&mut state, &mut ts, &mut target, &mut rng).unwrap();
            assert!(ts.cov.norm() <= 1.5 + 1e-12);
            assert!(ts.s_d >= 1e-4 && ts.s_d <= 1.5);
        }
    }

    #[test]
    fn leapfrog_zero_steps_is_identity_and_energy_is_conserved() {
        let x = DVector::from_element(1, 0.8);
        let p = DVector::from_element(1, -0.6);
        let ones = DVector::from_element(1, 1.0);
        let (l, g) = std_normal_grad(&x).unwrap();
        let e = leapfrog(&x, &p, (l, &g), std_normal_grad, 0.1, 0, &ones).unwrap().unwrap();
        assert_eq!((e.x, e.momentum), (x.clone(), p.clone()));
        let e = leapfrog(&x, &p, (l, &g), std_normal_grad, 0.01, 100, &ones).unwrap().unwrap();
        let dh = (-e.logf + 0.5 * e.momentum.norm_squared()) - (-l + 0.5 * p.norm_squared());
        assert!(dh.abs() < 1e-3);
    }

    #[test]
    fn hmc_small_steps_almost_always_accept() {
        let mut k = Kernel::Hmc(HmcConfig::new(1, 1e-3, 5));
        let mut target = TargetModel::from_density(Gaussian::standard(1));
        let tr = run_chain(&mut target, &mut k, DVector::zeros(1), StopRule::SampleSize(5000), 0, &mut derive_run_stream(6, 0)).unwrap();
        assert!(tr.acceptance_rate() > 0.99);
    }

    #[test]
    fn rejections_record_the_previous_state() {
        let (g, mean, _) = correlated();
        let mut k = Kernel::Am(frozen_am(DMatrix::identity(2, 2) * 25.0));
        let mut target = TargetModel::from_density(g);
        let tr = run_chain(&mut target, &mut k, mean.clone(), StopRule::SampleSize(400), 0, &mut derive_run_stream(2, 0)).unwrap();
        assert_eq!(tr.samples.len() as u64, tr.steps);
        assert!(tr.accepted < tr.steps / 2);
        let first_rejected = u64::from(tr.samples[0] == mean);
        let repeats = tr.samples.windows(2).filter(|w| w[0] == w[1]).count() as u64;
        assert_eq!(repeats + first_rejected, tr.steps - tr.accepted);
    }
}
