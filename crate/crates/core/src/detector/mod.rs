//! Defender-side detectors. All are deterministic functions of their input.

mod chi2;
mod extrema;
mod gate;
mod threshold;
mod variance;
mod whiteness;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};

pub use chi2::{chi2_detect, chi2_detect_scores, chi2_run_alarm, chi2_threshold};
pub use extrema::{detrend, extrema_detect, topographic_prominence};
pub use gate::euclidean_gate;
pub use threshold::threshold_detect;
pub use variance::{variance_compare, VarianceComparison};
pub use whiteness::{whiteness_test, WhitenessResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorVerdict {
    pub attacked: bool,
    pub score: f64,
    pub threshold: f64,
    /// `(start, end)` seconds covered by the statistic.
    pub t_window: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoded_bits: Option<BitString>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBand {
    pub low: f64,
    pub high: f64,
}

impl ThresholdBand {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low < high) {
            return Err(Error::config("band", format!("low {low} must be < high {high}")));
        }
        Ok(Self { low, high })
    }

    pub fn symmetric(half_width: f64) -> Result<Self> {
        Self::new(-half_width, half_width)
    }

    /// Defender bands used against deflect/return encoding at 1, 2 and 5 Hz.
    pub fn for_rate(rate_hz: f64) -> Self {
        let h = if rate_hz <= 1.5 {
            0.025
        } else if rate_hz <= 3.5 {
            0.035
        } else {
            0.030
        };
        Self { low: -h, high: h }
    }
}

/// A detector and its parameters, as named in configs and stealth budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectorSpec {
    Chi2 {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_window")]
        window: usize,
        /// Measurement indices tested; all when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        channels: Option<Vec<usize>>,
    },
    Threshold {
        /// Half-width of the band; picked from the bit rate when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        half_width: Option<f64>,
    },
    Extrema {
        /// Defaults to half the encoding amplitude.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_prominence: Option<f64>,
        /// Defaults to half the symbol period.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_separation_s: Option<f64>,
        /// Centred moving-average window removed before the search, so
        /// slow heading drift does not shift the level gate. Defaults to
        /// eight symbol periods; zero disables.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detrend_s: Option<f64>,
    },
    Whiteness {
        #[serde(default = "default_max_lag")]
        max_lag: usize,
        #[serde(default = "default_alpha_loose")]
        alpha: f64,
    },
    Variance {
        #[serde(default = "default_alpha_loose")]
        alpha: f64,
    },
    Euclidean {
        epsilon_m: f64,
    },
}

fn default_alpha() -> f64 {
    0.01
}
fn default_alpha_loose() -> f64 {
    0.05
}
fn default_window() -> usize {
    10
}
fn default_max_lag() -> usize {
    10
}

impl DetectorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorSpec::Chi2 { .. } => "chi2",
            DetectorSpec::Threshold { .. } => "threshold",
            DetectorSpec::Extrema { .. } => "extrema",
            DetectorSpec::Whiteness { .. } => "whiteness",
            DetectorSpec::Variance { .. } => "variance",
            DetectorSpec::Euclidean { .. } => "euclidean",
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::config(format!("{path}.{field}"), msg));
        match self {
            DetectorSpec::Chi2 { alpha, window, .. } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return bad("alpha", "must be in (0, 1)");
                }
                if *window == 0 {
                    return bad("window", "must be >= 1");
                }
            }
            DetectorSpec::Whiteness { alpha, max_lag } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return bad("alpha", "must be in (0, 1)");
                }
                if *max_lag == 0 {
                    return bad("max_lag", "must be >= 1");
                }
            }
            DetectorSpec::Variance { alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return bad("alpha", "must be in (0, 1)");
                }
            }
            DetectorSpec::Threshold { half_width: Some(h) } if !(*h > 0.0) => {
                return bad("half_width", "must be > 0");
            }
            DetectorSpec::Extrema {
                min_prominence: Some(p),
                ..
            } if !(*p > 0.0) => {
                return bad("min_prominence", "must be > 0");
            }
            DetectorSpec::Extrema { detrend_s: Some(d), .. } if !(*d >= 0.0) => {
                return bad("detrend_s", "must be >= 0");
            }
            DetectorSpec::Euclidean { epsilon_m } if !(*epsilon_m > 0.0) => {
                return bad("epsilon_m", "must be > 0");
            }
            _ => {}
        }
        Ok(())
    }
}

/// Output of a bit-recovering detector: one verdict per detected symbol event,
/// in time order, plus the concatenated bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitRecovery {
    pub verdicts: Vec<DetectorVerdict>,
    pub bits: BitString,
}

impl BitRecovery {
    pub fn attacked(&self) -> bool {
        self.verdicts.iter().any(|v| v.attacked)
    }

    /// Bits of the events that start in `[t0, t1)`.
    pub fn bits_within(&self, t0: f64, t1: f64) -> BitString {
        BitString(
            self.verdicts
                .iter()
                .zip(self.bits.iter())
                .filter(|(v, _)| v.t_window.0 >= t0 && v.t_window.0 < t1)
                .map(|(_, b)| b)
                .collect(),
        )
    }

    pub(crate) fn from_events(events: Vec<(f64, f64, f64, bool, f64)>) -> Self {
        // (t_start, t_end, score, bit, threshold)
        let bits = BitString(events.iter().map(|e| e.3).collect());
        let verdicts = events
            .into_iter()
            .map(|(a, b, score, bit, thr)| DetectorVerdict {
                attacked: score >= thr,
                score,
                threshold: thr,
                t_window: (a, b),
                decoded_bits: Some(BitString(vec![bit])),
            })
            .collect();
        Self { verdicts, bits }
    }
}

/// One minus the edit distance between sent and decoded bits, as a fraction
/// of the message length (floored at zero). A missed or spurious event costs
/// one bit instead of misaligning the rest of the message.
pub fn bit_accuracy(sent: &BitString, decoded: &BitString) -> f64 {
    if sent.is_empty() {
        return if decoded.is_empty() { 1.0 } else { 0.0 };
    }
    let d = strsim::generic_levenshtein(&sent.0, &decoded.0);
    (1.0 - d as f64 / sent.len() as f64).max(0.0)
}

pub(crate) fn check_series(times: &[f64], values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if times.len() != values.len() {
        return Err(Error::LengthMismatch {
            left: times.len(),
            right: values.len(),
        });
    }
    Ok(())
}
