//! The attacker's remote view of the plant: a sampled, noisy, quantized,
//! lossy channel, and the decoders matched to each encoding.

mod decode;
mod sequence;
mod view;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::Trace;

pub use decode::{decode_scheme1, decode_scheme2, Decoded, Scheme1Decoder};
pub use sequence::{Frame, ObservationSequence};
pub use view::{snr, viewpoint_gain, viewpoint_project, Viewpoint, SNR_CAP_DB};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverParams {
    #[serde(default = "default_fps")]
    pub fps: f64,
    /// Grid step of reported values; 0 disables quantization.
    #[serde(default)]
    pub quantization: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub dropout_prob: f64,
    /// Frames show the plant state this many seconds in the past.
    #[serde(default, rename = "latency_s")]
    pub latency: f64,
}

fn default_fps() -> f64 {
    30.0
}

impl Default for ObserverParams {
    fn default() -> Self {
        Self {
            fps: default_fps(),
            quantization: 0.0,
            noise_sigma: 0.0,
            dropout_prob: 0.0,
            latency: 0.0,
        }
    }
}

impl ObserverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(Error::config("observer.fps", "must be > 0"));
        }
        if !(self.quantization >= 0.0) {
            return Err(Error::config("observer.quantization", "must be >= 0"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::config("observer.noise_sigma", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::config("observer.dropout_prob", "must be in [0, 1)"));
        }
        if !(self.latency >= 0.0) {
            return Err(Error::config("observer.latency_s", "must be >= 0"));
        }
        Ok(())
    }

    pub fn quantize(&self, v: f64) -> f64 {
        if self.quantization > 0.0 {
            (v / self.quantization).round() * self.quantization
        } else {
            v
        }
    }
}

/// Samples `values` (taken at `times`) the way a camera would: frames at
/// `1/fps` spacing from a random phase, each showing the nearest plant
/// sample, then noise, quantization and dropout.
pub fn observe_series<R: Rng + ?Sized>(
    times: &[f64],
    values: &[f64],
    params: &ObserverParams,
    rng: &mut R,
) -> Result<ObservationSequence> {
    params.validate()?;
    if times.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if times.len() != values.len() {
        return Err(Error::LengthMismatch {
            left: times.len(),
            right: values.len(),
        });
    }
    let t0 = times[0];
    let t_last = times[times.len() - 1];
    if times.len() >= 2 {
        let rate = (times.len() - 1) as f64 / (t_last - t0);
        if params.fps > rate * (1.0 + 1e-9) {
            return Err(Error::config(
                "observer.fps",
                format!("{} exceeds the trace rate of {rate:.3} samples/s", params.fps),
            ));
        }
    }
    let frame_period = 1.0 / params.fps;
    let phase = rng.random::<f64>() * frame_period;
    let mut frames = Vec::new();
    let mut k = 0usize;
    loop {
        let t = t0 + phase + k as f64 * frame_period;
        if t > t_last {
            break;
        }
        let shown = t - params.latency;
        let i = times.partition_point(|&s| s < shown).min(times.len() - 1);
        let i = if i > 0 && (shown - times[i - 1]) <= (times[i] - shown) {
            i - 1
        } else {
            i
        };
        let noise: f64 = rng.sample(StandardNormal);
        let drop = rng.random::<f64>() < params.dropout_prob;
        let v = params.quantize(values[i] + params.noise_sigma * noise);
        frames.push(Frame {
            t,
            value: (!drop).then_some(v),
        });
        k += 1;
    }
    Ok(ObservationSequence { frames })
}

/// Observes one named column of a trace.
pub fn observe<R: Rng + ?Sized>(
    trace: &Trace,
    channel: &str,
    params: &ObserverParams,
    rng: &mut R,
) -> Result<ObservationSequence> {
    observe_series(trace.times(), trace.column(channel)?, params, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn ramp(n: usize) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * 0.01).collect();
        let v: Vec<f64> = t.iter().map(|x| (3.0 * x).sin()).collect();
        (t, v)
    }

    #[test]
    fn transparent_observer_reports_samples() {
        let (t, v) = ramp(1000);
        let obs = observe_series(&t, &v, &ObserverParams::default(), &mut seeded(1)).unwrap();
        assert!(obs.frames.len() >= 299);
        for f in &obs.frames {
            let i = ((f.t - t[0]) / 0.01).round() as usize;
            assert_eq!(f.value, Some(v[i]));
        }
        for w in obs.frames.windows(2) {
            assert!((w[1].t - w[0].t - 1.0 / 30.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quantized_values_on_grid() {
        let (t, v) = ramp(500);
        let p = ObserverParams {
            quantization: 0.01,
            noise_sigma: 0.003,
            ..Default::default()
        };
        let obs = observe_series(&t, &v, &p, &mut seeded(2)).unwrap();
        for f in obs.frames.iter().filter_map(|f| f.value) {
            let m = f / 0.01;
            assert!((m - m.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn dropout_fraction() {
        let t: Vec<f64> = (0..40_000).map(|k| k as f64 / 120.0).collect();
        let v = vec![0.0; t.len()];
        let p = ObserverParams {
            dropout_prob: 0.1,
            ..Default::default()
        };
        let obs = observe_series(&t, &v, &p, &mut seeded(3)).unwrap();
        assert!(obs.frames.len() >= 10_000);
        let frac = obs.frames.iter().filter(|f| f.value.is_none()).count() as f64 / obs.frames.len() as f64;
        assert!((0.07..=0.13).contains(&frac), "{frac}");
    }

    #[test]
    fn fps_above_trace_rate_rejected() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.05).collect();
        let v = vec![0.0; 100];
        let r = observe_series(&t, &v, &ObserverParams::default(), &mut seeded(4));
        assert!(matches!(r, Err(Error::Config { .. })));
    }

    #[test]
    fn latency_delays_view() {
        let t: Vec<f64> = (0..1000).map(|k| k as f64 * 0.01).collect();
        let p = ObserverParams {
            latency: 0.1,
            ..Default::default()
        };
        let obs = observe_series(&t, &t, &p, &mut seeded(5)).unwrap();
        let late = obs.frames.iter().find(|f| f.t > 1.0).unwrap();
        assert!((late.t - 0.1 - late.value.unwrap()).abs() <= 0.005 + 1e-12);
    }

    #[test]
    fn params_validation() {
        let bad = ObserverParams {
            dropout_prob: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(ObserverParams {
            fps: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
