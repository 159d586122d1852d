//! Running estimates and fixed-stride checkpoints on the evaluation axis.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::Point;

/// Estimates available after at most `eval_count` target evaluations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub eval_count: u64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub log_evidence: Option<f64>,
}

/// Unweighted running mean and (population) variance, Welford style.
#[derive(Debug, Clone)]
pub struct RunningMoments {
    n: u64,
    mean: DVector<f64>,
    m2: DVector<f64>,
}

impl RunningMoments {
    pub fn new(dim: usize) -> Self {
        RunningMoments { n: 0, mean: DVector::zeros(dim), m2: DVector::zeros(dim) }
    }

    pub fn push(&mut self, x: &Point) {
        self.n += 1;
        let delta = x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = x - &self.mean;
        self.m2 += delta.component_mul(&delta2);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> Vec<f64> {
        self.mean.iter().copied().collect()
    }

    pub fn var(&self) -> Vec<f64> {
        let n = self.n.max(1) as f64;
        self.m2.iter().map(|v| v / n).collect()
    }
}

/// Self-normalized importance-weighted moments plus the running evidence
/// estimate `log (1/N Σ w_i)`, accumulated stably in log space.
#[derive(Debug, Clone)]
pub struct WeightedMoments {
    n: u64,
    shift: f64,
    s0: f64,
    s1: DVector<f64>,
    s2: DVector<f64>,
}

impl WeightedMoments {
    pub fn new(dim: usize) -> Self {
        WeightedMoments { n: 0, shift: f64::NEG_INFINITY, s0: 0.0, s1: DVector::zeros(dim), s2: DVector::zeros(dim) }
    }

    pub fn push(&mut self, x: &Point, log_w: f64) {
        self.n += 1;
        if log_w == f64::NEG_INFINITY {
            return;
        }
        if log_w > self.shift {
            let r = (self.shift - log_w).exp();
            self.s0 *= r;
            self.s1 *= r;
            self.s2 *= r;
            self.shift = log_w;
        }
        let w = (log_w - self.shift).exp();
        self.s0 += w;
        self.s1 += x * w;
        self.s2 += x.component_mul(x) * w;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn has_mass(&self) -> bool {
        self.s0 > 0.0
    }

    pub fn mean(&self) -> Vec<f64> {
        self.s1.iter().map(|v| v / self.s0).collect()
    }

    pub fn var(&self) -> Vec<f64> {
        self.s1.iter().zip(self.s2.iter()).map(|(a, b)| (b / self.s0 - (a / self.s0).powi(2)).max(0.0)).collect()
    }

    pub fn log_evidence(&self) -> f64 {
        if self.n == 0 || self.s0 == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shift + self.s0.ln() - (self.n as f64).ln()
    }
}

/// Emits one checkpoint at each multiple of `stride` up to the budget. The
/// checkpoint at `n` carries the estimate of the last state whose
/// evaluation count was `<= n`.
#[derive(Debug, Clone)]
pub struct CheckpointRecorder {
    stride: u64,
    next: u64,
    out: Vec<Checkpoint>,
}

impl CheckpointRecorder {
    pub fn new(stride: u64) -> Self {
        CheckpointRecorder { stride, next: stride, out: Vec::new() }
    }

    fn emit_through<F: FnOnce() -> (Vec<f64>, Vec<f64>, Option<f64>)>(&mut self, limit_inclusive: u64, estimate: F) {
        if self.stride == 0 || self.next > limit_inclusive {
            return;
        }
        let (mean, var, log_evidence) = estimate();
        while self.next <= limit_inclusive {
            self.out.push(Checkpoint { eval_count: self.next, mean: mean.clone(), var: var.clone(), log_evidence });
            self.next += self.stride;
        }
    }

    /// Called before spending `cost` evaluations from `current`.
    pub fn before_step<F>(&mut self, current: u64, cost: u64, estimate: F)
    where
        F: FnOnce() -> (Vec<f64>, Vec<f64>, Option<f64>),
    {
        if cost == 0 {
            return;
        }
        self.emit_through(current + cost - 1, estimate);
    }

    /// Flushes the remaining checkpoints up to `limit` (the budget, or the
    /// final count when running without one).
    pub fn finish<F>(&mut self, limit: u64, estimate: F) -> Vec<Checkpoint>
    where
        F: FnOnce() -> (Vec<f64>, Vec<f64>, Option<f64>),
    {
        self.emit_through(limit, estimate);
        std::mem::take(&mut self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn running_moments_match_batch() {
        let xs = [1.0, 4.0, -2.0, 7.5];
        let mut m = RunningMoments::new(1);
        for x in xs {
            m.push(&Point::from_element(1, x));
        }
        let mean = xs.iter().sum::<f64>() / 4.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert_abs_diff_eq!(m.mean()[0], mean, epsilon = 1e-14);
        assert_abs_diff_eq!(m.var()[0], var, epsilon = 1e-12);
    }

    #[test]
    fn weighted_moments_and_evidence() {
        let mut m = WeightedMoments::new(1);
        m.push(&Point::from_element(1, 0.0), 2f64.ln());
        m.push(&Point::from_element(1, 3.0), 4f64.ln());
        assert_abs_diff_eq!(m.log_evidence(), 3f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(m.mean()[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.var()[0], 2.0, epsilon = 1e-12);
        m.push(&Point::from_element(1, 9.0), f64::NEG_INFINITY);
        assert_abs_diff_eq!(m.log_evidence(), 2f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn recorder_aligns_to_stride() {
        let mut r = CheckpointRecorder::new(100);
        let mut count = 0;
        let mut k = 0;
        // steps of 30 evaluations up to a budget of 300
        while count + 30 <= 300 {
            let c = count;
            r.before_step(count, 30, || (vec![c as f64], vec![0.0], None));
            count += 30;
            k += 1;
        }
        assert_eq!(k, 10);
        let cps = r.finish(300, || (vec![count as f64], vec![0.0], None));
        let at: Vec<u64> = cps.iter().map(|c| c.eval_count).collect();
        assert_eq!(at, vec![100, 200, 300]);
        // estimate at 100 is the state after 90 evaluations
        assert_eq!(cps[0].mean[0], 90.0);
        assert_eq!(cps[1].mean[0], 180.0);
        assert_eq!(cps[2].mean[0], 300.0);
    }
}
