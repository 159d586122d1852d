//! Points, targets with counted evaluations, and the random stream contract.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::Execution;
use crate::{GrisError, Result};

/// A state in the target's support.
pub type Point = DVector<f64>;

/// An unnormalized log-density with an analytic gradient.
pub trait Density: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &Point) -> f64 {
        self.log_density_grad(x).0
    }

    /// Log-density and its gradient at `x`, computed together.
    fn log_density_grad(&self, x: &Point) -> (f64, Point);
}

#[derive(Debug, Clone)]
struct CachedEval {
    point: Point,
    logf: f64,
    grad: Option<Point>,
}

/// Counts target evaluations. Querying the density and the gradient at the
/// same point, together or back to back, costs one evaluation.
#[derive(Debug, Clone, Default)]
pub struct EvalCounter {
    count: u64,
    last: Option<CachedEval>,
}

impl EvalCounter {
    pub fn count(&self) -> u64 {
        self.count
    }

    fn hit(&self, x: &Point) -> Option<&CachedEval> {
        self.last.as_ref().filter(|c| same_point(&c.point, x))
    }
}

/// Bitwise coordinate equality.
fn same_point(a: &Point, b: &Point) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits())
}

/// A density together with the evaluation counter of one sampler run.
///
/// Cloning shares the (immutable) density and copies the counter, so each
/// Monte Carlo replicate can own an independent budget.
#[derive(Clone)]
pub struct TargetModel {
    density: Arc<dyn Density>,
    counter: EvalCounter,
}

impl fmt::Debug for TargetModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetModel")
            .field("density", &self.density)
            .field("evals", &self.counter.count)
            .finish()
    }
}

impl TargetModel {
    pub fn new(density: Arc<dyn Density>) -> Self {
        TargetModel { density, counter: EvalCounter::default() }
    }

    pub fn from_density<D: Density + 'static>(density: D) -> Self {
        Self::new(Arc::new(density))
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    pub fn density(&self) -> &Arc<dyn Density> {
        &self.density
    }

    pub fn evals(&self) -> u64 {
        self.counter.count
    }

    pub fn counter(&self) -> &EvalCounter {
        &self.counter
    }

    /// Same density, fresh counter.
    pub fn fresh(&self) -> Self {
        Self::new(Arc::clone(&self.density))
    }

    fn check_dim(&self, x: &Point) -> Result<()> {
        if x.len() != self.dim() {
            return Err(GrisError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// Evaluates `log f(x)` and, if asked, its gradient. Costs one evaluation
    /// unless `x` is bitwise equal to the previously evaluated point.
    pub fn counted_eval(&mut self, x: &Point, need_grad: bool) -> Result<(f64, Option<Point>)> {
        self.check_dim(x)?;
        if let Some(cached) = self.counter.hit(x) {
            match (&cached.grad, need_grad) {
                (_, false) => return Ok((cached.logf, None)),
                (Some(g), true) => return Ok((cached.logf, Some(g.clone()))),
                (None, true) => {
                    let (logf, grad) = self.density.log_density_grad(x);
                    self.counter.last = Some(CachedEval { point: x.clone(), logf, grad: Some(grad.clone()) });
                    return Ok((logf, Some(grad)));
                }
            }
        }
        self.counter.count += 1;
        let (logf, grad) = if need_grad {
            let (l, g) = self.density.log_density_grad(x);
            (l, Some(g))
        } else {
            (self.density.log_density(x), None)
        };
        self.counter.last = Some(CachedEval { point: x.clone(), logf, grad: grad.clone() });
        Ok((logf, grad))
    }

    /// Joint density and gradient evaluation of a batch of points. The cost
    /// is the number of points, less cache hits against the preceding point
    /// in the sequence. Evaluation itself may run in parallel; results are
    /// identical either way.
    pub fn eval_batch(&mut self, xs: &[Point], exec: Execution) -> Result<Vec<(f64, Point)>> {
        for x in xs {
            self.check_dim(x)?;
        }
        let mut cost = 0u64;
        let mut prev = self.counter.last.as_ref().map(|c| &c.point);
        for x in xs {
            if !prev.is_some_and(|p| same_point(p, x)) {
                cost += 1;
            }
            prev = Some(x);
        }
        let density = &self.density;
        let out = exec.map(xs, |x| density.log_density_grad(x));
        self.counter.count += cost;
        if let (Some(x), Some((logf, grad))) = (xs.last(), out.last()) {
            self.counter.last = Some(CachedEval { point: x.clone(), logf: *logf, grad: Some(grad.clone()) });
        }
        Ok(out)
    }
}

/// Deterministic random stream: ChaCha8 keyed by a 64-bit seed, with the
/// replicate index selecting the ChaCha stream. Streams for distinct
/// `(seed, run_index)` pairs do not overlap.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    run_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub const ALGORITHM: &'static str = "chacha8/seed_from_u64+set_stream";

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn run_index(&self) -> u64 {
        self.run_index
    }
}

pub fn derive_run_stream(base_seed: u64, run_index: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(run_index);
    RngStream { seed: base_seed, run_index, rng }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
