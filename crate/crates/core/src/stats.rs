//! Cross-run statistics: coefficient of variation, simple-regression R², and
//! the permutation test used to judge whether a metric tracks validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, Summary, DEFAULT_COV_EPS};

/// Name of the generator behind [`permutation_test`], echoed into outputs.
pub const PERMUTATION_RNG: &str = "ChaCha8 (rand_chacha), Fisher-Yates shuffle, stream per 1024-trial chunk";

const TRIALS_PER_STREAM: u64 = 1024;

/// Population standard deviation over `|mean|`; `None` when `|mean| < 1e-9`.
pub fn cov(values: &[f64]) -> Result<Option<f64>> {
    cov_with(values, DEFAULT_COV_EPS)
}

pub fn cov_with(values: &[f64], eps: f64) -> Result<Option<f64>> {
    if values.len() < 2 {
        return Err(Error::Usage(format!(
            "coefficient of variation needs at least 2 values, got {}",
            values.len()
        )));
    }
    Ok(Summary::from_values(values).cov(eps))
}

fn centered(values: &[f64]) -> (Vec<f64>, f64) {
    let mean = compensated_sum(values.iter().copied()) / values.len() as f64;
    let c: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let ss = compensated_sum(c.iter().map(|v| v * v));
    (c, ss)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::Usage(format!(
            "regression needs at least 3 paired values, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in regression input".into()));
    }
    Ok(())
}

#[inline]
fn r2_from(cx: &[f64], sxx: f64, cy: &[f64], syy: f64) -> f64 {
    let sxy = compensated_sum(cx.iter().zip(cy).map(|(a, b)| a * b));
    ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0)
}

/// Squared Pearson correlation, i.e. the R² of a simple least-squares line.
/// Symmetric in its arguments bit for bit.
pub fn r_squared(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (cx, sxx) = centered(x);
    let (cy, syy) = centered(y);
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::Degenerate("constant input to r_squared".into()));
    }
    Ok(r2_from(&cx, sxx, &cy, syy))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationOutcome {
    pub observed_r2: f64,
    pub trials: u64,
    /// Trials whose permuted R² was at least the observed one.
    pub exceed_count: u64,
    /// `(1 + exceed) / (1 + trials)`.
    pub p_value: f64,
    /// `exceed / trials`.
    pub p_value_unsmoothed: f64,
    pub seed: u64,
    pub rng: String,
}

/// One-sided permutation test of R² between `metric` and `target`.
///
/// Each trial shuffles the metric values. Trials are split into fixed chunks of
/// 1024, chunk `k` drawing from stream `k` of a ChaCha8 generator seeded with
/// `seed`, so the outcome does not depend on how many threads run them.
pub fn permutation_test(metric: &[f64], target: &[f64], trials: u64, seed: u64) -> Result<PermutationOutcome> {
    check_pair(metric, target)?;
    if trials == 0 {
        return Err(Error::Usage("trials must be at least 1".into()));
    }
    let (cx, sxx) = centered(metric);
    let (cy, syy) = centered(target);
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::Degenerate("constant input to permutation test".into()));
    }
    let observed = r2_from(&cx, sxx, &cy, syy);

    let chunks = trials.div_ceil(TRIALS_PER_STREAM);
    let exceed_count: u64 = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let n = TRIALS_PER_STREAM.min(trials - k * TRIALS_PER_STREAM);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let mut perm = cx.clone();
            let mut hits = 0u64;
            for _ in 0..n {
                perm.shuffle(&mut rng);
                if r2_from(&perm, sxx, &cy, syy) >= observed {
                    hits += 1;
                }
            }
            hits
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();

    Ok(PermutationOutcome {
        observed_r2: observed,
        trials,
        exceed_count,
        p_value: (1 + exceed_count) as f64 / (1 + trials) as f64,
        p_value_unsmoothed: exceed_count as f64 / trials as f64,
        seed,
        rng: PERMUTATION_RNG.to_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cov_examples() {
        assert_eq!(cov(&[1.0, 1.0, 1.0]).unwrap(), Some(0.0));
        assert!((cov(&[2.0, 4.0]).unwrap().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(cov(&[-1.0, 1.0]).unwrap(), None);
        assert!(cov(&[1.0]).is_err());
    }

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((r_squared(&x, &y).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn five_point_hand_oracle() {
        // x̄ = 3, ȳ = 4; Sxy = 7, Sxx = 10, Syy = 10 -> R² = 49/100.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0, 5.0, 3.0, 4.0, 6.0];
        assert!((r_squared(&x, &y).unwrap() - 0.49).abs() < 1e-12);
        assert_eq!(r_squared(&x, &y).unwrap(), r_squared(&y, &x).unwrap());
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            r_squared(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(r_squared(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(permutation_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 0, 1).is_err());
    }

    #[test]
    fn single_trial_p_values() {
        let x = [0.3, 1.2, -0.4, 2.2, 0.9];
        let y = [1.0, 0.1, 0.5, -0.2, 0.7];
        for seed in 0..20 {
            let p = permutation_test(&x, &y, 1, seed).unwrap().p_value;
            assert!(p == 0.5 || p == 1.0, "{p}");
        }
    }

    #[test]
    fn same_seed_same_outcome() {
        let x: Vec<f64> = (0..21).map(|i| (i as f64 * 1.7).sin()).collect();
        let y: Vec<f64> = (0..21).map(|i| (i as f64 * 0.3).cos()).collect();
        let a = permutation_test(&x, &y, 3000, 9).unwrap();
        let b = permutation_test(&x, &y, 3000, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.p_value >= 1.0 / 3001.0);
    }
}
