use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::NoiseRng;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Mean of a metric across trials with a 95% percentile-bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub std: f64,
    pub n: usize,
}

fn sum_sorted(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.iter().sum()
}

pub fn summarize(values: &[f64], rng: &mut NoiseRng) -> MetricSummary {
    let n = values.len();
    if n == 0 {
        return MetricSummary {
            mean: f64::NAN,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
            std: f64::NAN,
            n,
        };
    }
    let mean = sum_sorted(values) / n as f64;
    let std = if n > 1 {
        let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
        (sum_sorted(&dev) / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * (BOOTSTRAP_RESAMPLES - 1) as f64).round() as usize).min(BOOTSTRAP_RESAMPLES - 1)];
    MetricSummary {
        mean,
        ci_low: at(0.025),
        ci_high: at(0.975),
        std,
        n,
    }
}
