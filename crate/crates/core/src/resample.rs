//! Weight normalization and importance resampling.

use rand::Rng;

use crate::{GrisError, Result};

/// Log-scale importance weights; entries may be `-inf`, never NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeights(pub Vec<f64>);

impl LogWeights {
    pub fn new(values: Vec<f64>) -> Self {
        LogWeights(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for LogWeights {
    fn from(v: Vec<f64>) -> Self {
        LogWeights(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Multinomial,
    Systematic,
}

/// Normalized weights `ŵ_i = w_i / Σ w_j`, via max-shifted exponentiation.
pub fn normalize(w: &LogWeights) -> Result<Vec<f64>> {
    if w.0.iter().any(|v| v.is_nan()) {
        return Err(GrisError::Contract("NaN log-weight".into()));
    }
    let m = w.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(GrisError::DegeneratePopulation);
    }
    if m == f64::INFINITY {
        return Err(GrisError::Contract("infinite log-weight".into()));
    }
    let mut out: Vec<f64> = w.0.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// Index of the first cumulative entry exceeding `u`, falling back to the
/// last positive-weight index when round-off leaves the total below `u`.
fn locate(cum: &[f64], probs: &[f64], u: f64) -> usize {
    let j = cum.partition_point(|&c| c <= u);
    if j < cum.len() {
        j
    } else {
        probs.iter().rposition(|&p| p > 0.0).expect("at least one positive weight")
    }
}

/// `count` i.i.d. categorical draws of ancestor indices.
pub fn multinomial_resample<R: Rng + ?Sized>(w: &LogWeights, count: usize, rng: &mut R) -> Result<Vec<usize>> {
    let probs = normalize(w)?;
    let cum = cumulative(&probs);
    Ok((0..count).map(|_| locate(&cum, &probs, rng.random::<f64>())).collect())
}

/// Systematic resampling: one uniform offset, `count` evenly spaced points.
pub fn systematic_resample<R: Rng + ?Sized>(w: &LogWeights, count: usize, rng: &mut R) -> Result<Vec<usize>> {
    let probs = normalize(w)?;
    let cum = cumulative(&probs);
    let u: f64 = rng.random();
    let n = count as f64;
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    for k in 0..count {
        let pos = (u + k as f64) / n;
        while j < cum.len() && cum[j] <= pos {
            j += 1;
        }
        out.push(if j < cum.len() { j } else { locate(&cum, &probs, pos) });
    }
    Ok(out)
}

pub fn resample<R: Rng + ?Sized>(scheme: Scheme, w: &LogWeights, count: usize, rng: &mut R) -> Result<Vec<usize>> {
    match scheme {
        Scheme::Multinomial => multinomial_resample(w, count, rng),
        Scheme::Systematic => systematic_resample(w, count, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_run_stream;
    use approx::assert_abs_diff_eq;

    fn lw(v: &[f64]) -> LogWeights {
        LogWeights(v.to_vec())
    }

    fn counts(idx: &[usize], k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        for &i in idx {
            c[i] += 1;
        }
        c
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&lw(&[0.0, 0.0])).unwrap(), vec![0.5, 0.5]);
        let w = normalize(&lw(&[0.0, 3f64.ln()])).unwrap();
        assert_abs_diff_eq!(w[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 0.75, epsilon = 1e-15);
        assert_eq!(normalize(&lw(&[1000.0, 1000.0])).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(normalize(&lw(&[f64::NEG_INFINITY; 2])), Err(GrisError::DegeneratePopulation)));
    }

    #[test]
    fn point_mass_always_selected() {
        let w = lw(&[0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]);
        let mut rng = derive_run_stream(1, 0);
        assert!(multinomial_resample(&w, 50, &mut rng).unwrap().iter().all(|&i| i == 0));
        assert!(systematic_resample(&w, 50, &mut rng).unwrap().iter().all(|&i| i == 0));
    }

    #[test]
    fn multinomial_uniform_chi_square() {
        let w = lw(&[0.0; 10]);
        let mut rng = derive_run_stream(2024, 0);
        let n = 100_000;
        let c = counts(&multinomial_resample(&w, n, &mut rng).unwrap(), 10);
        let e = n as f64 / 10.0;
        let stat: f64 = c.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        // 0.999 quantile of chi-square with 9 degrees of freedom
        let crit = 27.877_164_871_256_57;
        assert!(stat < crit, "chi2 {stat} >= {crit}");
    }

    #[test]
    fn systematic_exact_counts() {
        for seed in 0..20 {
            let mut rng = derive_run_stream(seed, 0);
            let idx = systematic_resample(&lw(&[0.0, 0.0]), 4, &mut rng).unwrap();
            assert_eq!(counts(&idx, 2), vec![2, 2]);
            let w = lw(&[0.25f64.ln(), 0.5f64.ln(), 0.125f64.ln(), 0.125f64.ln()]);
            let idx = systematic_resample(&w, 8, &mut rng).unwrap();
            assert_eq!(counts(&idx, 4), vec![2, 4, 1, 1]);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let w = lw(&[0.1, -0.3, 2.0, 0.0]);
        let a = multinomial_resample(&w, 30, &mut derive_run_stream(5, 1)).unwrap();
        let b = multinomial_resample(&w, 30, &mut derive_run_stream(5, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn both_schemes_unbiased() {
        let w = lw(&[0.2f64.ln(), 0.5f64.ln(), f64::NEG_INFINITY, 0.3f64.ln()]);
        let probs = normalize(&w).unwrap();
        let count = 7;
        let reps = 10_000;
        for scheme in [Scheme::Multinomial, Scheme::Systematic] {
            let mut rng = derive_run_stream(99, scheme as u64);
            let mut sum = [0f64; 4];
            let mut sumsq = [0f64; 4];
            for _ in 0..reps {
                let c = counts(&resample(scheme, &w, count, &mut rng).unwrap(), 4);
                assert_eq!(c[2], 0, "zero-weight index drawn");
                for j in 0..4 {
                    sum[j] += c[j] as f64;
                    sumsq[j] += (c[j] * c[j]) as f64;
                }
            }
            for j in 0..4 {
                let m = sum[j] / reps as f64;
                let v = sumsq[j] / reps as f64 - m * m;
                let se = (v / reps as f64).sqrt().max(1e-12);
                assert!((m - count as f64 * probs[j]).abs() <= 4.0 * se + 1e-12, "{scheme:?} idx {j}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn shift_invariance(raw in proptest::collection::vec(-20.0f64..5.0, 1..12), shift in -500.0f64..500.0, seed in 0u64..1000) {
            let w = LogWeights(raw.clone());
            let shifted = LogWeights(raw.iter().map(|v| v + shift).collect());
            let a = multinomial_resample(&w, 16, &mut derive_run_stream(seed, 0)).unwrap();
            let b = multinomial_resample(&shifted, 16, &mut derive_run_stream(seed, 0)).unwrap();
            // normalized probabilities agree to round-off, so draws agree except at razor-thin boundaries
            let pa = normalize(&w).unwrap();
            let pb = normalize(&shifted).unwrap();
            for (x, y) in pa.iter().zip(&pb) {
                proptest::prop_assert!((x - y).abs() < 1e-12);
            }
            let diff = a.iter().zip(&b).filter(|(x, y)| x != y).count();
            proptest::prop_assert!(diff <= 1);
        }
    }
}
