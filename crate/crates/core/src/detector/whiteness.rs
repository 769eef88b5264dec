use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitenessResult {
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub white: bool,
}

/// Ljung-Box portmanteau test over lags `1..=max_lag`.
pub fn whiteness_test(residuals: &[f64], max_lag: usize, alpha: f64) -> Result<WhitenessResult> {
    if max_lag == 0 {
        return Err(Error::config("detector.max_lag", "must be >= 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("detector.alpha", "must be in (0, 1)"));
    }
    let n = residuals.len();
    if n < 10 * max_lag {
        return Err(Error::TraceTooShort {
            len: n,
            required: 10 * max_lag,
        });
    }
    let dist = ChiSquared::new(max_lag as f64).map_err(|e| Error::config("detector", e.to_string()))?;
    let threshold = dist.inverse_cdf(1.0 - alpha);
    let m = residuals.iter().sum::<f64>() / n as f64;
    let c0: f64 = residuals.iter().map(|r| (r - m).powi(2)).sum();
    let statistic = if c0 == 0.0 {
        0.0
    } else {
        let nf = n as f64;
        (1..=max_lag)
            .map(|k| {
                let ck: f64 = residuals.windows(k + 1).map(|w| (w[0] - m) * (w[k] - m)).sum();
                (ck / c0).powi(2) / (nf - k as f64)
            })
            .sum::<f64>()
            * nf
            * (nf + 2.0)
    };
    let p_value = 1.0 - dist.cdf(statistic);
    Ok(WhitenessResult {
        statistic,
        threshold,
        p_value,
        white: statistic <= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use statrs::distribution::{Binomial, DiscreteCDF};

    #[test]
    fn zeros_are_white() {
        let r = whiteness_test(&[0.0; 200], 10, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.white);
    }

    fn white_passes(seeds: std::ops::Range<u64>) -> usize {
        seeds
            .filter(|&s| {
                let mut g = seeded(s);
                let x: Vec<f64> = (0..500).map(|_| g.sample(StandardNormal)).collect();
                whiteness_test(&x, 10, 0.05).unwrap().white
            })
            .count()
    }

    #[test]
    fn white_noise_pass_rate_is_nominal() {
        // A correctly sized test passes white noise 95% of the time on
        // average, so check the rate within Monte Carlo error.
        let n = 5000;
        let rate = white_passes(0..n) as f64 / n as f64;
        let se = (0.95 * 0.05 / n as f64).sqrt();
        assert!(rate >= 0.95 - 3.0 * se, "{rate}");
        // 200 runs: inside the binomial(200, 0.95) 95% interval or above it.
        let lo = Binomial::new(0.95, 200).unwrap().inverse_cdf(0.025);
        let pass = white_passes(0..200) as u64;
        assert!(pass >= lo, "{pass} < {lo}");
    }

    #[test]
    fn periodic_signal_fails() {
        let x: Vec<f64> = (0..500).map(|k| (k as f64 * 0.3).sin()).collect();
        assert!(!whiteness_test(&x, 10, 0.05).unwrap().white);
    }

    #[test]
    fn too_short() {
        assert!(matches!(
            whiteness_test(&[1.0; 50], 10, 0.05),
            Err(Error::TraceTooShort { .. })
        ));
    }
}
