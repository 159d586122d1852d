//! Effective sample sizes, squared-error metrics and ensemble aggregation.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::resample::{normalize, LogWeights};
use crate::{GrisError, Point, Result};

/// Autocorrelations are summed up to (not including) the first lag below this.
pub const AUTOCORR_CUTOFF: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthSource {
    Analytic,
    DefensiveIs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub source: TruthSource,
    #[serde(default)]
    pub log_z: Option<f64>,
    #[serde(default)]
    pub ess: Option<f64>,
}

impl GroundTruth {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `1 / Σ ŵ_i²`.
pub fn ess_is(log_weights: &[f64]) -> Result<f64> {
    normalize(&LogWeights(log_weights.to_vec()))?;
    let m = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (s, s2) = log_weights.iter().fold((0.0, 0.0), |(s, s2), l| {
        let w = (l - m).exp();
        (s + w, s2 + w * w)
    });
    Ok(s * s / s2)
}

/// Lag-`lag` autocorrelation of `series` using the ground-truth mean and
/// variance of the underlying function rather than sample moments.
pub fn autocorr_at_lag(series: &[f64], mean: f64, var: f64, lag: usize) -> Result<f64> {
    if !(var > 0.0) {
        return Err(GrisError::ZeroVariance);
    }
    let n = series.len();
    if lag == 0 || lag >= n {
        return Err(GrisError::Contract(format!("lag {lag} outside 1..{}", n.saturating_sub(1))));
    }
    let s: f64 = (lag..n).map(|j| (series[j] - mean) * (series[j - lag] - mean)).sum();
    Ok(s / (var * (n - lag) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssMc {
    pub ess: f64,
    /// Last lag included in the sum.
    pub cutoff: usize,
    /// No lag fell below the cutoff; all lags up to `N - 1` were summed.
    pub truncated: bool,
    /// The raw value exceeded `N` and was clamped.
    pub clamped: bool,
}

/// `N / (1 + 2 Σ_{i<c} (1 - i/N) ρ̂_i)` with `c` the first lag whose
/// autocorrelation falls below [`AUTOCORR_CUTOFF`].
pub fn ess_mc(series: &[f64], mean: f64, var: f64) -> Result<EssMc> {
    if !(var > 0.0) {
        return Err(GrisError::ZeroVariance);
    }
    let n = series.len();
    let nf = n as f64;
    let mut sum = 0.0;
    let mut cutoff = 0;
    let mut truncated = true;
    for lag in 1..n {
        let rho = autocorr_at_lag(series, mean, var, lag)?;
        if rho < AUTOCORR_CUTOFF {
            truncated = false;
            break;
        }
        sum += (1.0 - lag as f64 / nf) * rho;
        cutoff = lag;
    }
    if n <= 1 {
        truncated = false;
    }
    let raw = nf / (1.0 + 2.0 * sum);
    let clamped = raw > nf;
    Ok(EssMc { ess: raw.clamp(f64::MIN_POSITIVE, nf.max(1.0)), cutoff, truncated, clamped })
}

/// Minimum ESS over dimensions, for both the coordinate itself and its
/// squared deviation from the true mean. For the latter, the true
/// expectation is the true variance and the variance of `h` is taken from
/// the chain, as no fourth moments are known.
pub fn ess_mc_min(chain: &[Point], truth: &GroundTruth) -> Result<f64> {
    let first = chain.first().ok_or_else(|| GrisError::Contract("empty chain".into()))?;
    if chain.iter().all(|x| x == first) && chain.len() > 1 {
        return Err(GrisError::ZeroVariance);
    }
    let mut best = f64::INFINITY;
    for d in 0..truth.dim() {
        let coord: Vec<f64> = chain.iter().map(|x| x[d]).collect();
        best = best.min(ess_mc(&coord, truth.mean[d], truth.variance[d])?.ess);
        let sq: Vec<f64> = coord.iter().map(|v| (v - truth.mean[d]).powi(2)).collect();
        let h_mean = truth.variance[d];
        let h_var = sq.iter().map(|h| (h - h_mean).powi(2)).sum::<f64>() / sq.len() as f64;
        if h_var > 0.0 {
            best = best.min(ess_mc(&sq, h_mean, h_var)?.ess);
        }
    }
    Ok(best)
}

/// Squared error of each mean estimate.
pub fn squared_errors(est_mean: &[f64], truth: &GroundTruth) -> Vec<f64> {
    est_mean.iter().zip(&truth.mean).map(|(e, t)| (e - t).powi(2)).collect()
}

/// Largest squared error over mean and variance estimates and dimensions.
pub fn max_se(est_mean: &[f64], est_var: &[f64], truth: &GroundTruth) -> f64 {
    let m = squared_errors(est_mean, truth).into_iter();
    let v = est_var.iter().zip(&truth.variance).map(|(e, t)| (e - t).powi(2));
    m.chain(v).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: usize,
    pub seed: u64,
    pub evals: u64,
    pub checkpoints: Vec<Checkpoint>,
    pub final_mean: Vec<f64>,
    pub final_var: Vec<f64>,
    /// Squared error of the final mean estimate, per dimension.
    pub se: Vec<f64>,
    pub max_se: f64,
    pub log_evidence: Option<f64>,
    /// Only defined for importance samplers.
    pub ess_is: Option<f64>,
    /// Only defined for MCMC chains.
    pub ess_mc: Option<f64>,
    pub acceptance_rate: Option<f64>,
}

/// Squared bias, across-run variance and MSE of one estimated quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    pub bias2: Vec<f64>,
    pub variance: Vec<f64>,
    pub mse: Vec<f64>,
}

impl ErrorDecomposition {
    fn of(estimates: &[&[f64]], truth: &[f64]) -> Self {
        let r = estimates.len() as f64;
        let d = truth.len();
        let mut out = ErrorDecomposition { bias2: vec![0.0; d], variance: vec![0.0; d], mse: vec![0.0; d] };
        for k in 0..d {
            let mean = estimates.iter().map(|e| e[k]).sum::<f64>() / r;
            out.bias2[k] = (mean - truth[k]).powi(2);
            out.variance[k] = if estimates.len() > 1 {
                estimates.iter().map(|e| (e[k] - mean).powi(2)).sum::<f64>() / (r - 1.0)
            } else {
                0.0
            };
            out.mse[k] = estimates.iter().map(|e| (e[k] - truth[k]).powi(2)).sum::<f64>() / r;
        }
        out
    }

    pub fn pooled(values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / values.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub eval_count: u64,
    pub mean: ErrorDecomposition,
    pub var: ErrorDecomposition,
    pub log_evidence: Option<ErrorDecomposition>,
}

/// Per-checkpoint error decomposition across runs. The MSE satisfies
/// `mse = bias2 + variance · (R-1)/R`.
pub fn aggregate(runs: &[Vec<Checkpoint>], truth: &GroundTruth) -> Result<Vec<AggregatePoint>> {
    let first = runs.first().ok_or_else(|| GrisError::Misaligned("no runs".into()))?;
    for (i, r) in runs.iter().enumerate() {
        if r.len() != first.len() || r.iter().zip(first).any(|(a, b)| a.eval_count != b.eval_count) {
            return Err(GrisError::Misaligned(format!("run {i} checkpoints differ from run 0")));
        }
    }
    let mut out = Vec::with_capacity(first.len());
    for (k, cp) in first.iter().enumerate() {
        let means: Vec<&[f64]> = runs.iter().map(|r| r[k].mean.as_slice()).collect();
        let vars: Vec<&[f64]> = runs.iter().map(|r| r[k].var.as_slice()).collect();
        let log_evidence = match truth.log_z {
            Some(z) if runs.iter().all(|r| r[k].log_evidence.is_some()) => {
                let evs: Vec<[f64; 1]> = runs.iter().map(|r| [r[k].log_evidence.unwrap()]).collect();
                let refs: Vec<&[f64]> = evs.iter().map(|e| e.as_slice()).collect();
                Some(ErrorDecomposition::of(&refs, &[z]))
            }
            _ => None,
        };
        out.push(AggregatePoint {
            eval_count: cp.eval_count,
            mean: ErrorDecomposition::of(&means, &truth.mean),
            var: ErrorDecomposition::of(&vars, &truth.variance),
            log_evidence,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn truth(mean: &[f64], var: &[f64]) -> GroundTruth {
        GroundTruth { mean: mean.to_vec(), variance: var.to_vec(), source: TruthSource::Analytic, log_z: None, ess: None }
    }

    #[test]
    fn ess_is_examples() {
        assert_abs_diff_eq!(ess_is(&[0.3; 4]).unwrap(), 4.0, epsilon = 1e-12);
        assert_eq!(ess_is(&[f64::NEG_INFINITY, 1.0, f64::NEG_INFINITY]).unwrap(), 1.0);
        assert_abs_diff_eq!(ess_is(&[0.0, 3f64.ln()]).unwrap(), 1.6, epsilon = 1e-12);
    }

    #[test]
    fn alternating_series_has_lag_one_minus_one() {
        let s: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_abs_diff_eq!(autocorr_at_lag(&s, 0.0, 1.0, 1).unwrap(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn autocorr_scale_invariant() {
        let s = [0.3, -1.2, 2.2, 0.1, -0.7, 1.9];
        let c = 3.5;
        let scaled: Vec<f64> = s.iter().map(|v| v * c).collect();
        let a = autocorr_at_lag(&s, 0.1, 1.3, 2).unwrap();
        let b = autocorr_at_lag(&scaled, 0.1 * c, 1.3 * c * c, 2).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
    }

    #[test]
    fn zero_truth_variance_is_an_error() {
        assert!(matches!(autocorr_at_lag(&[1.0, 2.0], 0.0, 0.0, 1), Err(GrisError::ZeroVariance)));
        assert!(matches!(ess_mc(&[1.0, 2.0], 0.0, 0.0), Err(GrisError::ZeroVariance)));
    }

    #[test]
    fn single_sample_ess_is_one() {
        let e = ess_mc(&[0.4], 0.0, 1.0).unwrap();
        assert_eq!(e.ess, 1.0);
        assert!(!e.truncated);
    }

    #[test]
    fn never_decorrelating_series_is_flagged() {
        let s = vec![5.0; 20];
        let e = ess_mc(&s, 0.0, 1.0).unwrap();
        assert!(e.truncated);
        assert_eq!(e.cutoff, 19);
    }

    #[test]
    fn identical_chain_is_degenerate() {
        let chain = vec![Point::from_vec(vec![1.0]); 10];
        assert!(matches!(ess_mc_min(&chain, &truth(&[0.0], &[1.0])), Err(GrisError::ZeroVariance)));
    }

    #[test]
    fn max_se_by_hand() {
        let t = truth(&[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(max_se(&[0.0, 0.0], &[1.0, 1.0], &t), 0.0);
        assert_abs_diff_eq!(max_se(&[0.1, 0.0], &[1.0, 1.2], &t), 0.04, epsilon = 1e-12);
        let swapped = truth(&[0.0, 0.0], &[1.0, 1.0]);
        assert_abs_diff_eq!(max_se(&[0.0, 0.1], &[1.2, 1.0], &swapped), 0.04, epsilon = 1e-12);
    }

    fn cp(e: u64, m: f64) -> Checkpoint {
        Checkpoint { eval_count: e, mean: vec![m], var: vec![1.0], log_evidence: None }
    }

    #[test]
    fn aggregate_examples() {
        let t = truth(&[2.0], &[1.0]);
        let same = vec![vec![cp(100, 2.5)], vec![cp(100, 2.5)], vec![cp(100, 2.5)]];
        let a = aggregate(&same, &t).unwrap();
        assert_eq!(a[0].mean.variance, vec![0.0]);
        assert_abs_diff_eq!(a[0].mean.mse[0], a[0].mean.bias2[0], epsilon = 1e-15);

        let pair = vec![vec![cp(100, 2.3)], vec![cp(100, 1.7)]];
        let a = aggregate(&pair, &t).unwrap();
        assert_abs_diff_eq!(a[0].mean.bias2[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a[0].mean.mse[0], 0.09, epsilon = 1e-12);

        let bad = vec![vec![cp(100, 1.0)], vec![cp(200, 1.0)]];
        assert!(matches!(aggregate(&bad, &t), Err(GrisError::Misaligned(_))));
    }

    #[test]
    fn iid_normals_have_full_ess() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = crate::derive_run_stream(0, 0);
        let s: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e = ess_mc(&s, 0.0, 1.0).unwrap();
        assert!(e.ess >= 8_000.0 && e.ess <= 10_000.0, "{}", e.ess);
    }

    #[test]
    fn duplicated_samples_halve_ess() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = crate::derive_run_stream(1, 0);
        let base: Vec<f64> = (0..5_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s: Vec<f64> = base.iter().flat_map(|v| [*v, *v]).collect();
        let n = s.len() as f64;
        // direct lag sums with the known mean 0 and variance 1
        let rho = |k: usize| (k..s.len()).map(|j| s[j] * s[j - k]).sum::<f64>() / (n - k as f64);
        let (r1, r2) = (rho(1), rho(2));
        assert!(r1 > 0.05 && r2 < 0.05);
        let expect = n / (1.0 + 2.0 * (1.0 - 1.0 / n) * r1);
        let e = ess_mc(&s, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(e.ess, expect, epsilon = 1e-9 * expect);
        assert_eq!(e.cutoff, 1);
        assert!((e.ess / (n / 2.0) - 1.0).abs() < 0.1);
    }

    proptest::proptest! {
        #[test]
        fn ess_is_bounded(w in proptest::collection::vec(-30.0f64..30.0, 1..50)) {
            let e = ess_is(&w).unwrap();
            proptest::prop_assert!(e >= 1.0 - 1e-9 && e <= w.len() as f64 + 1e-9);
        }

        #[test]
        fn mse_decomposition(ests in proptest::collection::vec(-5.0f64..5.0, 2..30), t in -3.0f64..3.0) {
            let runs: Vec<Vec<Checkpoint>> = ests.iter().map(|e| vec![cp(10, *e)]).collect();
            let a = aggregate(&runs, &truth(&[t], &[1.0])).unwrap();
            let r = ests.len() as f64;
            let lhs = a[0].mean.mse[0];
            let rhs = a[0].mean.bias2[0] + a[0].mean.variance[0] * (r - 1.0) / r;
            proptest::prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn ess_mc_shift_invariant(s in proptest::collection::vec(-3.0f64..3.0, 2..60), shift in -100.0f64..100.0) {
            let a = ess_mc(&s, 0.0, 1.0).unwrap().ess;
            let shifted: Vec<f64> = s.iter().map(|v| v + shift).collect();
            let b = ess_mc(&shifted, shift, 1.0).unwrap().ess;
            proptest::prop_assert!(a > 0.0 && a <= s.len() as f64);
            proptest::prop_assert!((a - b).abs() < 1e-6 * a);
        }
    }
}
