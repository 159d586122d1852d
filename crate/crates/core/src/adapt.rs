//! Running moments and the adaptive proposal scale.
//!
//! After `t0` observations the scale is `s_d · (S + ε I)` where `S` is the
//! unbiased sample covariance of everything observed so far; before that it
//! is the fixed initial matrix `C0`. The adapted matrix is maintained with
//! the rank-one recursion
//!
//! ```text
//! C_{t+1} = (t-1)/t · C_t + s_d/t · (t x̄_{t-1} x̄_{t-1}ᵀ − (t+1) x̄_t x̄_tᵀ + x_t x_tᵀ + ε I)
//! ```
//!
//! and its Cholesky factor is recomputed from scratch every `refresh_every`
//! adaptation calls.

use nalgebra::{DMatrix, DVector};

use crate::linalg::Factor;
use crate::{GrisError, Point, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    /// Observations before the adapted matrix replaces `c0`.
    pub t0: usize,
    pub c0: DMatrix<f64>,
    pub s_d: f64,
    pub eps: f64,
    /// Adaptation calls between refactorizations (`k`).
    pub refresh_every: usize,
}

impl AdaptConfig {
    /// `t0 = p`, `C0 = 0.1² I / d`, `s_d = 2.38² / d`, `ε = 1e-6`, `k = 1`.
    pub fn defaults(dim: usize, population: usize) -> Self {
        let d = dim as f64;
        AdaptConfig {
            t0: population,
            c0: DMatrix::identity(dim, dim) * (0.01 / d),
            s_d: 2.38 * 2.38 / d,
            eps: 1e-6,
            refresh_every: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdaptState {
    cfg: AdaptConfig,
    t: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    factor: Factor,
    pending: usize,
}

impl AdaptState {
    pub fn new(cfg: AdaptConfig) -> Result<Self> {
        let d = cfg.c0.nrows();
        if cfg.c0.ncols() != d {
            return Err(GrisError::Contract("C0 must be square".into()));
        }
        if !(cfg.s_d > 0.0) || cfg.eps < 0.0 || cfg.refresh_every == 0 {
            return Err(GrisError::Contract("need s_d > 0, eps >= 0, refresh_every >= 1".into()));
        }
        let factor = Factor::from_cov(&cfg.c0, jitter0(&cfg.c0), "C0")?;
        let cov = DMatrix::identity(d, d) * (cfg.s_d * cfg.eps);
        Ok(AdaptState { t: 0, mean: DVector::zeros(d), cov, factor, pending: 0, cfg })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Number of observations so far.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// The adapted matrix, meaningful once `t >= 2`.
    pub fn adapted_cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn config(&self) -> &AdaptConfig {
        &self.cfg
    }

    pub fn is_adapted(&self) -> bool {
        self.t > self.cfg.t0
    }

    /// `C0` while `t <= t0`, the adapted matrix afterwards.
    pub fn current_scale(&self) -> &DMatrix<f64> {
        if self.is_adapted() {
            &self.cov
        } else {
            &self.cfg.c0
        }
    }

    /// Cholesky factor of the scale as of the last refresh.
    pub fn factor(&self) -> &Factor {
        &self.factor
    }

    fn check(&self, x: &Point) -> Result<()> {
        if x.len() != self.dim() {
            return Err(GrisError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// Folds `x` into the running mean only.
    pub fn update_moments(&mut self, x: &Point) -> Result<()> {
        self.check(x)?;
        self.t += 1;
        let n = self.t as f64;
        self.mean += (x - &self.mean) / n;
        Ok(())
    }

    /// One step of the covariance recursion followed by the mean update.
    pub fn update_covariance(&mut self, x: &Point) -> Result<()> {
        self.check(x)?;
        if self.t == 0 {
            return Err(GrisError::Contract("covariance recursion needs at least one prior sample".into()));
        }
        let t = self.t as f64;
        let old = self.mean.clone();
        let new = &old + (x - &old) / (t + 1.0);
        let d = self.dim();
        let mut corr = &old * old.transpose() * t - &new * new.transpose() * (t + 1.0) + x * x.transpose();
        for i in 0..d {
            corr[(i, i)] += self.cfg.eps;
        }
        self.cov = &self.cov * ((t - 1.0) / t) + corr * (self.cfg.s_d / t);
        // exact symmetry
        for i in 0..d {
            for j in 0..i {
                let v = 0.5 * (self.cov[(i, j)] + self.cov[(j, i)]);
                self.cov[(i, j)] = v;
                self.cov[(j, i)] = v;
            }
        }
        self.mean = new;
        self.t += 1;
        Ok(())
    }

    fn fold(&mut self, x: &Point) -> Result<()> {
        if self.t == 0 {
            self.update_moments(x)
        } else {
            self.update_covariance(x)
        }
    }

    /// Observes one sample; counts as one adaptation call.
    pub fn observe(&mut self, x: &Point) -> Result<()> {
        self.fold(x)?;
        self.after_call()
    }

    /// Observes a batch of samples; counts as one adaptation call.
    pub fn observe_batch<'a, I: IntoIterator<Item = &'a Point>>(&mut self, xs: I) -> Result<()> {
        for x in xs {
            self.fold(x)?;
        }
        self.after_call()
    }

    fn after_call(&mut self) -> Result<()> {
        self.pending += 1;
        if self.pending >= self.cfg.refresh_every {
            self.refresh()?;
        }
        Ok(())
    }

    /// Refactorizes the current scale.
    pub fn refresh(&mut self) -> Result<()> {
        self.pending = 0;
        let c = self.current_scale();
        self.factor = Factor::from_cov(c, jitter0(c), "C_t")?;
        Ok(())
    }
}

fn jitter0(c: &DMatrix<f64>) -> f64 {
    let scale = c.trace().abs() / c.nrows().max(1) as f64;
    1e-10 * if scale > 0.0 { scale } else { 1.0 }
}
