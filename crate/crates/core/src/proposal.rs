//! Drifted Gaussian proposal `N(x' + D(t, ∇log f(x')), C_t)`.

use rand::Rng;

use crate::linalg::{standard_normal, Factor};
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftConfig {
    /// Drift scale δ ≥ 0.
    pub delta: f64,
    /// The drift decays as `t^-decay_exponent`.
    pub decay_exponent: f64,
    /// Drift norms are capped at `cap_factor · sqrt(trace C_t)`; `None` disables the cap.
    pub cap_factor: Option<f64>,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig { delta: 0.0, decay_exponent: 1.5, cap_factor: Some(10.0) }
    }
}

impl DriftConfig {
    pub fn with_delta(delta: f64) -> Self {
        DriftConfig { delta, ..Default::default() }
    }
}

/// `(δ / t^a) · grad`.
pub fn drift(t: usize, grad: &Point, cfg: &DriftConfig) -> Point {
    debug_assert!(t >= 1);
    if cfg.delta == 0.0 {
        return Point::zeros(grad.len());
    }
    grad * (cfg.delta / (t as f64).powf(cfg.decay_exponent))
}

/// Rescales `v` to norm `cap_factor · sqrt(trace C)` when it is longer.
pub fn truncate_drift(mut v: Point, factor: &Factor, cap_factor: Option<f64>) -> Point {
    if let Some(k) = cap_factor {
        let cap = k * factor.trace_cov().sqrt();
        let norm = v.norm();
        if norm > cap && norm.is_finite() {
            v *= cap / norm;
        } else if !norm.is_finite() {
            v.fill(0.0);
        }
    }
    v
}

/// Parameters of one conditional proposal.
#[derive(Debug, Clone)]
pub struct ProposalParams<'a> {
    pub origin: Point,
    pub drift_vec: Point,
    pub factor: &'a Factor,
}

impl<'a> ProposalParams<'a> {
    /// Builds the proposal around `origin` for iteration `t`, with the drift
    /// computed from the gradient at `origin` and truncated per `cfg`.
    pub fn langevin(origin: Point, grad: &Point, t: usize, cfg: &DriftConfig, factor: &'a Factor) -> Self {
        let drift_vec = truncate_drift(drift(t, grad, cfg), factor, cfg.cap_factor);
        ProposalParams { origin, drift_vec, factor }
    }

    pub fn mean(&self) -> Point {
        &self.origin + &self.drift_vec
    }

    pub fn log_det_half(&self) -> f64 {
        self.factor.log_det_half()
    }
}

pub fn propose<R: Rng + ?Sized>(params: &ProposalParams<'_>, rng: &mut R) -> Point {
    let z = standard_normal(params.origin.len(), rng);
    params.mean() + params.factor.apply(&z)
}

pub fn proposal_logpdf(x: &Point, params: &ProposalParams<'_>) -> f64 {
    params.factor.gaussian_logpdf(x, &params.mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::LN_2PI;
    use crate::model::derive_run_stream;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn p(v: &[f64]) -> Point {
        Point::from_row_slice(v)
    }

    #[test]
    fn drift_values() {
        let c = |d| DriftConfig { delta: d, decay_exponent: 1.5, cap_factor: None };
        assert_eq!(drift(1, &p(&[2.0, 0.0]), &c(0.5)), p(&[1.0, 0.0]));
        assert_eq!(drift(7, &p(&[2.0, -9.0]), &c(0.0)), p(&[0.0, 0.0]));
        assert_abs_diff_eq!(drift(4, &p(&[8.0, -16.0]), &c(1.0)), p(&[1.0, -2.0]), epsilon = 1e-15);
    }

    #[test]
    fn drift_norm_decreases_in_t() {
        let c = DriftConfig::with_delta(0.3);
        let g = p(&[1.0, -2.0, 0.5]);
        let norms: Vec<f64> = (1..50).map(|t| drift(t, &g, &c).norm()).collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn long_drift_is_truncated() {
        let f = Factor::identity(2);
        let v = truncate_drift(p(&[300.0, 400.0]), &f, Some(10.0));
        assert_abs_diff_eq!(v.norm(), 10.0 * 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(truncate_drift(p(&[1.0, 1.0]), &f, Some(10.0)), p(&[1.0, 1.0]));
    }

    #[test]
    fn zero_factor_gives_mean_exactly() {
        let f = Factor::from_lower(DMatrix::zeros(2, 2));
        let params = ProposalParams { origin: p(&[1.0, 2.0]), drift_vec: p(&[0.5, -1.0]), factor: &f };
        let mut rng = derive_run_stream(1, 0);
        assert_eq!(propose(&params, &mut rng), p(&[1.5, 1.0]));
    }

    #[test]
    fn fixed_seed_reproduces_draw() {
        let f = Factor::identity(3);
        let params = ProposalParams { origin: p(&[0.0, 1.0, 2.0]), drift_vec: Point::zeros(3), factor: &f };
        let a = propose(&params, &mut derive_run_stream(9, 2));
        let b = propose(&params, &mut derive_run_stream(9, 2));
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_mean_of_unit_steps() {
        let f = Factor::identity(2);
        let params = ProposalParams { origin: p(&[3.0, -1.0]), drift_vec: Point::zeros(2), factor: &f };
        let mut rng = derive_run_stream(2, 0);
        let n = 100_000;
        let sum = (0..n).fold(DVector::zeros(2), |acc, _| acc + propose(&params, &mut rng));
        let mean = sum / n as f64;
        let band = 4.0 / (n as f64).sqrt();
        assert!((mean[0] - 3.0).abs() < band && (mean[1] + 1.0).abs() < band);
    }

    #[test]
    fn logpdf_by_hand() {
        let f = Factor::identity(2);
        let params = ProposalParams { origin: p(&[1.0, 1.0]), drift_vec: p(&[0.0, 1.0]), factor: &f };
        assert_abs_diff_eq!(proposal_logpdf(&p(&[1.0, 2.0]), &params), -LN_2PI, epsilon = 1e-14);
        assert_abs_diff_eq!(proposal_logpdf(&p(&[1.0, 2.0]), &params), -1.837877, epsilon = 1e-6);

        let f4 = Factor::from_lower(DMatrix::from_element(1, 1, 2.0));
        let params = ProposalParams { origin: p(&[0.5]), drift_vec: p(&[0.0]), factor: &f4 };
        let want = -0.5 * (2.0 * std::f64::consts::PI * 4.0).ln();
        assert_abs_diff_eq!(proposal_logpdf(&p(&[0.5]), &params), want, epsilon = 1e-14);
    }

    #[test]
    fn logpdf_symmetric_about_mean() {
        let l = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.4, 0.7]);
        let f = Factor::from_lower(l);
        let params = ProposalParams { origin: p(&[0.2, -0.1]), drift_vec: p(&[0.3, 0.3]), factor: &f };
        let v = p(&[0.9, -1.7]);
        let m = params.mean();
        assert_abs_diff_eq!(proposal_logpdf(&(&m + &v), &params), proposal_logpdf(&(&m - &v), &params), epsilon = 1e-14);
    }

    #[test]
    fn density_integrates_to_one() {
        // 1D: trapezoid over ±12 sd
        let f1 = Factor::from_lower(DMatrix::from_element(1, 1, 0.8));
        let params = ProposalParams { origin: p(&[0.4]), drift_vec: p(&[0.1]), factor: &f1 };
        let n = 4001;
        let (lo, hi) = (0.5 - 12.0 * 0.8, 0.5 + 12.0 * 0.8);
        let h = (hi - lo) / (n - 1) as f64;
        let total: f64 = (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * proposal_logpdf(&p(&[lo + i as f64 * h]), &params).exp()
            })
            .sum::<f64>()
            * h;
        assert!((total - 1.0).abs() < 1e-3);

        // 2D: midpoint grid over a box of ±10 sd
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.6, 0.8]);
        let f2 = Factor::from_lower(l);
        let params = ProposalParams { origin: p(&[0.0, 0.0]), drift_vec: p(&[0.0, 0.0]), factor: &f2 };
        let m = 400;
        let h = 20.0 / m as f64;
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = p(&[-10.0 + (i as f64 + 0.5) * h, -10.0 + (j as f64 + 0.5) * h]);
                total += proposal_logpdf(&x, &params).exp();
            }
        }
        assert!((total * h * h - 1.0).abs() < 1e-3);
    }

    #[test]
    fn sampling_agrees_with_entropy() {
        let l = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.3, 0.5, 0.0, -0.2, 0.1, 2.0]);
        let f = Factor::from_lower(l);
        let params = ProposalParams { origin: p(&[1.0, 0.0, -1.0]), drift_vec: p(&[0.0, 0.2, 0.0]), factor: &f };
        let mut rng = derive_run_stream(77, 0);
        let n = 10_000;
        let lls: Vec<f64> = (0..n).map(|_| proposal_logpdf(&propose(&params, &mut rng), &params)).collect();
        let mean = lls.iter().sum::<f64>() / n as f64;
        let var = lls.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let d = 3.0;
        let entropy = 0.5 * d * (1.0 + LN_2PI) + f.log_det_half();
        assert!((-mean - entropy).abs() < 3.0 * (var / n as f64).sqrt());
    }
}
