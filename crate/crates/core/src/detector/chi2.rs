use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use super::DetectorVerdict;
use crate::error::{Error, Result};
use crate::estimator::Innovation;

/// Per-step threshold on the windowed mean NIS: the `1 - alpha` quantile of
/// chi-square with `dof * n` degrees of freedom, divided by `n`.
pub fn chi2_threshold(dof: usize, n: usize, alpha: f64) -> f64 {
    let k = (dof * n) as f64;
    ChiSquared::new(k)
        .map(|d| d.inverse_cdf(1.0 - alpha) / n as f64)
        .unwrap_or(f64::INFINITY)
}

fn validate(alpha: f64, window: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("detector.alpha", "must be in (0, 1)"));
    }
    if window == 0 {
        return Err(Error::config("detector.window", "must be >= 1"));
    }
    Ok(())
}

/// Windowed chi-square test on precomputed NIS values, one verdict per step.
/// The first `window - 1` steps use the partial window available so far.
pub fn chi2_detect_scores(
    nis: &[f64],
    times: &[f64],
    dof: usize,
    alpha: f64,
    window: usize,
) -> Result<Vec<DetectorVerdict>> {
    validate(alpha, window)?;
    if nis.len() != times.len() {
        return Err(Error::LengthMismatch {
            left: nis.len(),
            right: times.len(),
        });
    }
    let thresholds: Vec<f64> = (1..=window).map(|n| chi2_threshold(dof, n, alpha)).collect();
    let mut sum = 0.0;
    let mut out = Vec::with_capacity(nis.len());
    for i in 0..nis.len() {
        sum += nis[i];
        if i >= window {
            sum -= nis[i - window];
        }
        let n = (i + 1).min(window);
        let score = sum / n as f64;
        let threshold = thresholds[n - 1];
        out.push(DetectorVerdict {
            attacked: score > threshold,
            score,
            threshold,
            t_window: (times[i + 1 - n], times[i]),
            decoded_bits: None,
        });
    }
    Ok(out)
}

/// Windowed chi-square residual detector. `components` restricts the test to
/// a subset of measurement channels (all when `None`).
pub fn chi2_detect(
    innovations: &[Innovation],
    alpha: f64,
    window: usize,
    components: Option<&[usize]>,
) -> Result<Vec<DetectorVerdict>> {
    validate(alpha, window)?;
    let Some(first) = innovations.first() else {
        return Ok(Vec::new());
    };
    let dof = components.map_or(first.r.len(), |c| c.len());
    let nis = innovations
        .iter()
        .map(|inn| match components {
            Some(c) => inn.nis_subset(c),
            None => inn.nis(),
        })
        .collect::<Result<Vec<_>>>()?;
    let times: Vec<f64> = innovations.iter().map(|i| i.t).collect();
    chi2_detect_scores(&nis, &times, dof, alpha, window)
}

/// Run-level decision from per-step verdicts. Only every `window`-th
/// verdict is used so the windows do not overlap and are independent under
/// the nominal model; the run is flagged when that many alarms would occur
/// with probability below `alpha`. Returns the flag and the binomial tail
/// probability.
pub fn chi2_run_alarm(verdicts: &[DetectorVerdict], window: usize, alpha: f64) -> (bool, f64) {
    let window = window.max(1);
    let picks: Vec<bool> = verdicts
        .iter()
        .skip(window - 1)
        .step_by(window)
        .map(|v| v.attacked)
        .collect();
    if picks.is_empty() {
        return (false, 1.0);
    }
    let alarms = picks.iter().filter(|a| **a).count() as u64;
    if alarms == 0 {
        return (false, 1.0);
    }
    let p = Binomial::new(alpha, picks.len() as u64)
        .map(|b| b.sf(alarms - 1))
        .unwrap_or(1.0);
    (p < alpha, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Mat, Vector};
    use crate::rng::seeded;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn white(n: usize, q: usize, offset: f64, seed: u64) -> Vec<Innovation> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|k| Innovation {
                r: Vector::from_iterator(q, (0..q).map(|_| offset + rng.sample::<f64, _>(StandardNormal))),
                s: Mat::identity(q, q),
                t: k as f64 * 0.02,
            })
            .collect()
    }

    #[test]
    fn zero_residuals_never_flag() {
        let inn: Vec<Innovation> = (0..100)
            .map(|k| Innovation {
                r: Vector::zeros(2),
                s: Mat::identity(2, 2),
                t: k as f64,
            })
            .collect();
        assert!(chi2_detect(&inn, 0.01, 5, None).unwrap().iter().all(|v| !v.attacked));
    }

    #[test]
    fn threshold_matches_tabulated_quantile() {
        // chi2(1) 0.99 quantile = 6.634897
        assert!((chi2_threshold(1, 1, 0.01) - 6.634_896_6).abs() < 1e-5);
        // chi2(10) 0.99 quantile = 23.209251, divided by window 10
        assert!((chi2_threshold(1, 10, 0.01) - 2.320_925_1).abs() < 1e-6);
    }

    #[test]
    fn false_positive_rate_near_alpha() {
        // calibration by simulation: non-overlapping windows over white residuals
        let alpha = 0.01;
        let window = 10;
        let mut flags = 0usize;
        let mut total = 0usize;
        for run in 0..500 {
            let inn = white(200, 1, 0.0, 1000 + run);
            let v = chi2_detect(&inn, alpha, window, None).unwrap();
            for k in (window - 1..v.len()).step_by(window) {
                total += 1;
                flags += v[k].attacked as usize;
            }
        }
        let rate = flags as f64 / total as f64;
        assert!((0.005..=0.02).contains(&rate), "{rate}");
    }

    #[test]
    fn three_sigma_offset_detected_quickly() {
        let window = 10;
        let mut hits = 0;
        for run in 0..200 {
            let inn = white(2 * window, 1, 3.0, 50 + run);
            let v = chi2_detect(&inn, 0.01, window, None).unwrap();
            hits += v.iter().any(|v| v.attacked) as usize;
        }
        assert!(hits as f64 / 200.0 >= 0.99);
    }

    #[test]
    fn subset_uses_reduced_dof() {
        let inn = white(50, 4, 0.0, 3);
        let v = chi2_detect(&inn, 0.05, 1, Some(&[3])).unwrap();
        assert!((v[0].threshold - chi2_threshold(1, 1, 0.05)).abs() < 1e-12);
    }

    #[test]
    fn run_alarm_is_rare_without_attack() {
        let flagged = (0..300)
            .filter(|&k| {
                let v = chi2_detect(&white(1000, 1, 0.0, 9000 + k), 0.01, 10, None).unwrap();
                chi2_run_alarm(&v, 10, 0.01).0
            })
            .count();
        assert!(flagged <= 9, "{flagged}");
        let v = chi2_detect(&white(1000, 1, 1.5, 1), 0.01, 10, None).unwrap();
        assert!(chi2_run_alarm(&v, 10, 0.01).0);
    }

    #[test]
    fn bad_parameters() {
        let inn = white(5, 1, 0.0, 1);
        assert!(chi2_detect(&inn, 0.0, 5, None).is_err());
        assert!(chi2_detect(&inn, 0.5, 0, None).is_err());
    }
}
