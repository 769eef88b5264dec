use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComparison {
    pub baseline_var: f64,
    pub test_var: f64,
    /// `test_var / baseline_var`.
    pub ratio: f64,
    pub p_value: f64,
    pub flagged: bool,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Sample size discounted for lag-1 autocorrelation, so that smooth,
/// correlated trajectories are not treated as independent draws.
pub(crate) fn effective_size(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (m, _) = mean_var(x);
    let den: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    if den == 0.0 {
        return n;
    }
    let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    let rho = (num / den).clamp(0.0, 0.99);
    (n * (1.0 - rho) / (1.0 + rho)).max(2.0)
}

/// Two-sided F-test of `test` against `baseline` variance for one channel.
pub fn variance_compare(baseline: &[f64], test: &[f64], alpha: f64) -> Result<VarianceComparison> {
    if baseline.len() != test.len() {
        return Err(Error::LengthMismatch {
            left: baseline.len(),
            right: test.len(),
        });
    }
    if baseline.len() < 3 {
        return Err(Error::TraceTooShort {
            len: baseline.len(),
            required: 3,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("detector.alpha", "must be in (0, 1)"));
    }
    let (_, vb) = mean_var(baseline);
    let (_, vt) = mean_var(test);
    let (ratio, p_value) = if vb == 0.0 && vt == 0.0 {
        (1.0, 1.0)
    } else if vb == 0.0 {
        (f64::INFINITY, 0.0)
    } else if baseline == test {
        (1.0, 1.0)
    } else {
        let ratio = vt / vb;
        let d1 = effective_size(test) - 1.0;
        let d2 = effective_size(baseline) - 1.0;
        let f = FisherSnedecor::new(d1, d2).map_err(|e| Error::config("detector", e.to_string()))?;
        let c = f.cdf(ratio);
        (ratio, (2.0 * c.min(1.0 - c)).min(1.0))
    };
    Ok(VarianceComparison {
        baseline_var: vb,
        test_var: vt,
        ratio,
        p_value,
        flagged: p_value < alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn draw(n: usize, sd: f64, seed: u64) -> Vec<f64> {
        let mut r = seeded(seed);
        (0..n).map(|_| sd * r.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn identical_inputs_ratio_one() {
        let x = draw(500, 1.0, 1);
        let c = variance_compare(&x, &x, 0.05).unwrap();
        assert_eq!(c.ratio, 1.0);
        assert!(c.p_value > 0.05);
        assert!(!c.flagged);
    }

    #[test]
    fn doubled_spread_is_flagged() {
        let c = variance_compare(&draw(500, 1.0, 1), &draw(500, 2.0, 2), 0.05).unwrap();
        assert!((c.ratio - 4.0).abs() < 1.0);
        assert!(c.flagged);
    }

    #[test]
    fn same_distribution_rarely_flagged() {
        let flags = (0..400)
            .filter(|&k| {
                variance_compare(&draw(300, 1.0, 2 * k), &draw(300, 1.0, 2 * k + 1), 0.05)
                    .unwrap()
                    .flagged
            })
            .count();
        assert!((flags as f64 / 400.0) < 0.09, "{flags}");
    }

    #[test]
    fn autocorrelation_shrinks_effective_size() {
        let white = draw(1000, 1.0, 5);
        let mut walk = vec![0.0; 1000];
        for i in 1..1000 {
            walk[i] = 0.95 * walk[i - 1] + white[i];
        }
        assert!(effective_size(&walk) < 100.0);
        assert!(effective_size(&white) > 800.0);
    }

    #[test]
    fn constant_series() {
        let c = variance_compare(&[1.0; 10], &[1.0; 10], 0.05).unwrap();
        assert_eq!(c.ratio, 1.0);
        let d = variance_compare(&[1.0; 10], &draw(10, 1.0, 3), 0.05).unwrap();
        assert!(d.flagged);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(variance_compare(&[0.0; 5], &[0.0; 6], 0.05).is_err());
    }
}
