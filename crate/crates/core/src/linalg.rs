//! Cholesky factors and Gaussian helpers shared by the samplers.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{GrisError, Point, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Number of tenfold jitter escalations tried after `jitter0` itself.
const JITTER_STEPS: i32 = 6;

/// Lower-triangular `L` with `L Lᵀ = C + jitter·I`.
///
/// Tries jitter `0, j0, 10·j0, ..., 10⁶·j0` and returns the first that
/// factorizes.
pub fn factorize(c: &DMatrix<f64>, jitter0: f64, name: &str) -> Result<(DMatrix<f64>, f64)> {
    let d = c.nrows();
    let ladder = std::iter::once(0.0).chain((0..=JITTER_STEPS).map(|k| jitter0 * 10f64.powi(k)));
    for jitter in ladder {
        let mut m = c.clone();
        for i in 0..d {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(m) {
            let l = ch.l();
            if l.iter().all(|v| v.is_finite()) {
                return Ok((l, jitter));
            }
        }
        if jitter0 <= 0.0 {
            break;
        }
    }
    Err(GrisError::NotFactorizable { name: name.to_string(), max_jitter: jitter0 * 10f64.powi(JITTER_STEPS) })
}

/// A Gaussian scale matrix carried as its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    lower: DMatrix<f64>,
    log_det_half: f64,
}

impl Factor {
    pub fn from_lower(lower: DMatrix<f64>) -> Self {
        let log_det_half = lower.diagonal().iter().map(|v| v.ln()).sum();
        Factor { lower, log_det_half }
    }

    pub fn from_cov(c: &DMatrix<f64>, jitter0: f64, name: &str) -> Result<Self> {
        factorize(c, jitter0, name).map(|(l, _)| Self::from_lower(l))
    }

    pub fn identity(d: usize) -> Self {
        Self::from_lower(DMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `Σ log L_ii`, i.e. half the log-determinant of the covariance.
    pub fn log_det_half(&self) -> f64 {
        self.log_det_half
    }

    pub fn cov(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }

    pub fn trace_cov(&self) -> f64 {
        self.lower.iter().map(|v| v * v).sum()
    }

    /// `L z`.
    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.lower * z
    }

    /// Squared Mahalanobis norm `vᵀ C⁻¹ v`.
    pub fn mahalanobis_sq(&self, v: &DVector<f64>) -> f64 {
        match self.lower.solve_lower_triangular(v) {
            Some(w) => w.norm_squared(),
            None => f64::INFINITY,
        }
    }

    /// `C⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let w = self.lower.solve_lower_triangular(v).expect("nonsingular factor");
        self.lower.transpose().solve_upper_triangular(&w).expect("nonsingular factor")
    }

    /// Gaussian log-density of `x` with the given mean and covariance `L Lᵀ`.
    pub fn gaussian_logpdf(&self, x: &Point, mean: &Point) -> f64 {
        let d = self.dim() as f64;
        -0.5 * d * LN_2PI - self.log_det_half - 0.5 * self.mahalanobis_sq(&(x - mean))
    }

    pub fn sample<R: Rng + ?Sized>(&self, mean: &Point, rng: &mut R) -> Point {
        mean + self.apply(&standard_normal(self.dim(), rng))
    }
}

pub fn standard_normal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Unbiased (n−1) sample covariance of a set of points.
pub fn sample_cov(xs: &[Point]) -> DMatrix<f64> {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mean = xs.iter().fold(DVector::zeros(d), |acc, x| acc + x) / n;
    let mut c = DMatrix::zeros(d, d);
    for x in xs {
        let dev = x - &mean;
        c += &dev * dev.transpose();
    }
    c / (n - 1.0)
}

/// `log Σ exp(v_i)`, stable for large magnitudes; `-inf` when all are `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
