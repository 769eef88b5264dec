use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AttackScheme, ScenarioConfig};
use super::sim::{arm_plan, message_schedule, simulate_arm, simulate_drone, Simulated};
use super::stats::{summarize, MetricSummary};
use super::trace::Trace;
use crate::angle::wrap;
use crate::bits::{BitString, SymbolString};
use crate::detector::{
    bit_accuracy, chi2_detect, chi2_run_alarm, detrend, euclidean_gate, extrema_detect, threshold_detect,
    variance_compare, whiteness_test, DetectorSpec, ThresholdBand,
};
use crate::error::{Error, Result};
use crate::exfil::{PerturbationSchedule, TrajectoryPlan};
use crate::observer::{
    decode_scheme1, decode_scheme2, observe_series, snr, viewpoint_gain, viewpoint_project, ObservationSequence,
    Scheme1Decoder,
};
use crate::protocol::{align, ber, deframe, frame_with, BerReport, FrameFormat, LinkTrial};
use crate::rng::{stream_rng, trial_seed, Stream};

const BASELINE_SALT: u64 = 0x6261_7365_6c69_6e65;

pub const RESULT_SCHEMA: &str = "physexfil.scenario.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Run trials on the rayon pool. Results do not depend on this.
    pub parallel: bool,
    /// Keep the trace and observation of trial 0.
    pub keep_trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            parallel: true,
            keep_trace: false,
        }
    }
}

/// Per-run details of trial 0, kept for inspection.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialExample {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sent: Option<BitString>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoded: Option<SymbolString>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub detector_bits: BTreeMap<String, BitString>,
    #[serde(default)]
    pub detected: BTreeMap<String, bool>,
    /// Outcome of deframing when the message is a framed payload.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_hex: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub index: usize,
    pub metrics: BTreeMap<String, f64>,
    pub example: TrialExample,
    pub trace: Option<Trace>,
    pub observation: Option<ObservationSequence>,
    /// Attacker link outcome, when an attack ran.
    pub link: Option<BerReport>,
    pub frame_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub schema: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub n_trials: usize,
    pub config: ScenarioConfig,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub example: TrialExample,
    #[serde(skip)]
    pub trace: Option<Trace>,
    #[serde(skip)]
    pub observation: Option<ObservationSequence>,
}

impl ScenarioResult {
    pub fn metric(&self, name: &str) -> Result<&MetricSummary> {
        self.metrics
            .get(name)
            .ok_or_else(|| Error::EmptyResults(format!("metric `{name}` missing")))
    }

    pub fn mean(&self, name: &str) -> Result<f64> {
        self.metric(name).map(|m| m.mean)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

/// Message bits for one trial, and the payload when framed.
pub(crate) fn trial_message(cfg: &ScenarioConfig, seed: u64) -> Result<(BitString, Option<Vec<u8>>)> {
    let a = &cfg.attacker;
    if let Some(b) = &a.bits {
        return Ok((b.clone(), None));
    }
    if let Some(p) = a.payload()? {
        return Ok((frame_with(&p, FrameFormat { crc: a.crc })?, Some(p)));
    }
    if let Some(n) = a.random_bits {
        let mut rng = stream_rng(seed, Stream::Payload);
        return Ok((BitString((0..n).map(|_| rng.random()).collect()), None));
    }
    Ok((BitString::default(), None))
}

/// What the attacker would transmit in trial 0, without simulating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub config_sha256: String,
    pub seed: u64,
    pub bits: BitString,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_hex: Option<String>,
    pub schedule: PerturbationSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectoryPlan>,
}

/// Encodes the trial-0 message. Fails with the encoder's infeasibility
/// error when the rate, capacity or stealth budget cannot be met.
pub fn plan_attack(cfg: &ScenarioConfig) -> Result<AttackPlan> {
    cfg.validate()?;
    if !cfg.is_attacked() {
        return Err(Error::config("attacker.scheme", "no attack configured"));
    }
    let (bits, payload) = trial_message(cfg, trial_seed(cfg.seed, 0))?;
    let (schedule, trajectory) = if cfg.scenario.is_drone() {
        (
            message_schedule(cfg, &bits)?.expect("attacked drone has a schedule"),
            None,
        )
    } else {
        let plan = arm_plan(cfg, &bits)?;
        (plan.schedule.clone(), Some(plan))
    };
    Ok(AttackPlan {
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        bits,
        payload_hex: payload.map(hex::encode),
        schedule,
        trajectory,
    })
}

pub(crate) fn detector_names(specs: &[DetectorSpec]) -> Vec<String> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    specs
        .iter()
        .map(|d| {
            let c = seen.entry(d.name()).or_insert(0);
            *c += 1;
            if *c == 1 {
                d.name().to_string()
            } else {
                format!("{}_{}", d.name(), c)
            }
        })
        .collect()
}

fn simulate(cfg: &ScenarioConfig, seed: u64, bits: &BitString) -> Result<Simulated> {
    if cfg.scenario.is_drone() {
        simulate_drone(cfg, seed, bits)
    } else {
        simulate_arm(cfg, seed, bits)
    }
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
}

/// Amplitude of the encoding in the defender's and attacker's units.
fn amplitude(cfg: &ScenarioConfig) -> f64 {
    match cfg.attacker.scheme {
        AttackScheme::Trajectory => cfg.attacker.deviation_m,
        _ if cfg.scenario.is_drone() => cfg.attacker.amplitude_rad(),
        _ => cfg.attacker.deviation_m,
    }
}

fn symbol_period(cfg: &ScenarioConfig) -> f64 {
    match cfg.attacker.scheme {
        AttackScheme::HoldDuration => cfg.attacker.hold_s,
        _ => 1.0 / cfg.attacker.rate_hz,
    }
}

/// Simulates and scores one trial.
pub fn run_trial(cfg: &ScenarioConfig, index: usize, keep_trace: bool) -> Result<TrialOutput> {
    let seed = trial_seed(cfg.seed, index as u64);
    let (bits, payload) = trial_message(cfg, seed)?;
    let sim = simulate(cfg, seed, &bits)?;
    let mut metrics = BTreeMap::new();
    let mut example = TrialExample::default();
    metrics.insert("nees".to_string(), sim.nees_final);
    for (name, series) in &sim.error_channels {
        metrics.insert(format!("error_var.{name}"), variance(series));
    }

    let times = sim.trace.times().to_vec();
    let mut observation = None;
    let mut link = None;
    let mut frame_ok = None;
    if cfg.is_attacked() {
        let series: Vec<f64> = if cfg.scenario.is_drone() {
            let ch = cfg.attacker.channel.pose_index().unwrap_or(3);
            let names = ["x", "y", "z", "yaw"];
            let p = sim.trace.column(names[ch])?;
            let r = sim.trace.column(&format!("ref_{}", names[ch]))?;
            if ch == 3 {
                let rel: Vec<f64> = p.iter().zip(r).map(|(a, b)| wrap(a - b)).collect();
                viewpoint_project(&rel, cfg.observer.viewpoint)
            } else {
                p.iter().zip(r).map(|(a, b)| a - b).collect()
            }
        } else {
            sim.trace.column(sim.observed)?.to_vec()
        };
        let gain = if cfg.scenario.is_drone() && cfg.attacker.channel.pose_index() == Some(3) {
            viewpoint_gain(cfg.observer.viewpoint)
        } else {
            1.0
        };
        let mut rng = stream_rng(seed, Stream::Observer);
        let obs = observe_series(&times, &series, &cfg.observer.params(), &mut rng)?;
        let decoded = match cfg.attacker.scheme {
            AttackScheme::HoldDuration => decode_scheme2(&obs, amplitude(cfg) * gain, cfg.attacker.hold_s)?,
            _ => decode_scheme1(
                &obs,
                &Scheme1Decoder {
                    bit_rate: cfg.attacker.rate_hz,
                    amplitude_hint: amplitude(cfg) * gain,
                    start_s: sim.message_start,
                    n_bits: Some(bits.len()),
                    delay_s: cfg.decode_delay(),
                },
            )?,
        };
        let aligned = align(&decoded.symbols, bits.len());
        let report = ber(&bits.to_symbols(), &aligned)?;
        metrics.insert("ber".into(), report.ber_rate);
        metrics.insert(
            "erasure_rate".into(),
            report.erasures as f64 / report.length.max(1) as f64,
        );
        if let Some(s) = &sim.schedule {
            if let Ok(db) = snr(&obs, s) {
                metrics.insert("snr_db".into(), db);
            }
        }
        if let Some(p) = &payload {
            let fmt = FrameFormat { crc: cfg.attacker.crc };
            let (ok, tag) = match deframe(&decoded.symbols, Some(p.len()), fmt) {
                Ok(d) => {
                    example.payload_hex = Some(hex::encode(&d.payload));
                    (d.payload == *p, if d.payload == *p { "ok" } else { "payload_mismatch" })
                }
                Err(Error::CrcMismatch { payload, .. }) => {
                    example.payload_hex = Some(hex::encode(payload));
                    (false, "crc_mismatch")
                }
                Err(_) => (false, "no_preamble"),
            };
            metrics.insert("frame_ok".into(), ok as u8 as f64);
            frame_ok = Some(ok);
            example.integrity = Some(tag.to_string());
        }
        link = Some(report);
        example.sent = Some(bits.clone());
        example.decoded = Some(decoded.symbols);
        observation = keep_trace.then_some(obs);
    }

    // Detector bits are scored over the transmission, allowing half a
    // symbol of settling after the last one.
    let scoring_window = sim
        .schedule
        .as_ref()
        .filter(|_| cfg.is_attacked())
        .map(|s| (s.start(), s.end() + symbol_period(cfg) / 2.0));
    let mut baseline: Option<Simulated> = None;
    for (name, spec) in detector_names(&cfg.detectors).into_iter().zip(&cfg.detectors) {
        let detected = match spec {
            DetectorSpec::Chi2 {
                alpha,
                window,
                channels,
            } => {
                let v = chi2_detect(&sim.innovations, *alpha, *window, channels.as_deref())?;
                let rate = v.iter().filter(|v| v.attacked).count() as f64 / v.len().max(1) as f64;
                metrics.insert(format!("{name}.alarm_rate"), rate);
                chi2_run_alarm(&v, *window, *alpha).0
            }
            DetectorSpec::Threshold { half_width } => {
                let band = match half_width {
                    Some(h) => ThresholdBand::symmetric(*h)?,
                    None => ThresholdBand::for_rate(cfg.attacker.rate_hz),
                };
                let rec = threshold_detect(&times, &sim.defender_signal, band)?;
                if let Some((t0, t1)) = scoring_window {
                    let got = rec.bits_within(t0, t1);
                    metrics.insert(format!("{name}.accuracy"), bit_accuracy(&bits, &got));
                    example.detector_bits.insert(name.clone(), got);
                }
                rec.attacked()
            }
            DetectorSpec::Extrema {
                min_prominence,
                min_separation_s,
                detrend_s,
            } => {
                let prom = min_prominence.unwrap_or(amplitude(cfg) / 2.0);
                let sep = min_separation_s.unwrap_or(symbol_period(cfg) / 2.0);
                let flat = detrend(
                    &times,
                    &sim.defender_signal,
                    detrend_s.unwrap_or(8.0 * symbol_period(cfg)),
                )?;
                let rec = extrema_detect(&times, &flat, prom, sep)?;
                if let Some((t0, t1)) = scoring_window {
                    let got = rec.bits_within(t0, t1);
                    metrics.insert(format!("{name}.accuracy"), bit_accuracy(&bits, &got));
                    example.detector_bits.insert(name.clone(), got);
                }
                rec.attacked()
            }
            DetectorSpec::Whiteness { max_lag, alpha } => {
                let m = sim.innovations.first().map_or(0, |i| i.r.len());
                let mut min_p: f64 = 1.0;
                let mut flagged = false;
                for c in 0..m {
                    let z: Vec<f64> = sim.innovations.iter().map(|i| i.r[c] / i.s[(c, c)].sqrt()).collect();
                    let w = whiteness_test(&z, *max_lag, alpha / m as f64)?;
                    min_p = min_p.min(w.p_value);
                    flagged |= !w.white;
                }
                metrics.insert(format!("{name}.min_p"), min_p);
                flagged
            }
            DetectorSpec::Variance { alpha } => {
                if baseline.is_none() {
                    // Independent noise: the defender's reference flights
                    // are not replays of the attacked one.
                    let base_seed = trial_seed(cfg.seed ^ BASELINE_SALT, index as u64);
                    baseline = Some(simulate(&cfg.baseline(), base_seed, &bits)?);
                }
                let base = baseline.as_ref().expect("just set");
                let mut flagged = false;
                for ((ch, test), (_, reference)) in sim.error_channels.iter().zip(&base.error_channels) {
                    let c = variance_compare(reference, test, *alpha)?;
                    metrics.insert(format!("{name}.ratio.{ch}"), c.ratio);
                    metrics.insert(format!("{name}.p.{ch}"), c.p_value);
                    flagged |= c.flagged;
                }
                flagged
            }
            DetectorSpec::Euclidean { epsilon_m } => {
                if sim.waypoints.is_empty() {
                    return Err(Error::config("detectors", "euclidean gate needs the arm scenario"));
                }
                !sim.waypoints
                    .iter()
                    .all(|(est, act)| euclidean_gate(*est, *act, *epsilon_m))
            }
        };
        metrics.insert(format!("{name}.detected"), detected as u8 as f64);
        example.detected.insert(name, detected);
    }

    Ok(TrialOutput {
        index,
        metrics,
        example,
        trace: keep_trace.then_some(sim.trace),
        observation,
        link,
        frame_ok,
    })
}

/// One trial reduced to link statistics for capacity estimation. Without a
/// framed payload, a frame counts as delivered when every bit is right.
pub fn link_trial(cfg: &ScenarioConfig, index: usize) -> Result<LinkTrial> {
    if !cfg.is_attacked() {
        return Err(Error::config("attacker.scheme", "capacity needs an attack"));
    }
    let out = run_trial(cfg, index, false)?;
    let r = out.link.expect("attacked trial reports its link");
    Ok(LinkTrial {
        bits: r.length,
        bit_errors: r.bit_errors,
        erasures: r.erasures,
        frame_ok: out.frame_ok.unwrap_or(r.bit_errors + r.erasures == 0),
    })
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    run_scenario_with(cfg, RunOptions::default())
}

/// Runs all trials and aggregates every metric as mean with a bootstrap
/// interval. Output is identical for serial and parallel execution.
pub fn run_scenario_with(cfg: &ScenarioConfig, opts: RunOptions) -> Result<ScenarioResult> {
    cfg.validate()?;
    let one = |i: usize| run_trial(cfg, i, opts.keep_trace && i == 0);
    let trials: Vec<TrialOutput> = if opts.parallel {
        (0..cfg.n_trials).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        (0..cfg.n_trials).map(one).collect::<Result<_>>()?
    };
    let names: BTreeSet<&String> = trials.iter().flat_map(|t| t.metrics.keys()).collect();
    let mut boot = stream_rng(trial_seed(cfg.seed, u64::MAX), Stream::Bootstrap);
    let metrics = names
        .into_iter()
        .map(|name| {
            let values: Vec<f64> = trials
                .iter()
                .filter_map(|t| t.metrics.get(name).copied())
                .filter(|v| v.is_finite())
                .collect();
            (name.clone(), values)
        })
        .filter(|(_, v)| !v.is_empty())
        .map(|(name, v)| (name, summarize(&v, &mut boot)))
        .collect();
    let mut first = trials.into_iter().next().expect("n_trials >= 1");
    Ok(ScenarioResult {
        schema: RESULT_SCHEMA.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        n_trials: cfg.n_trials,
        config: cfg.clone(),
        metrics,
        example: std::mem::take(&mut first.example),
        trace: first.trace,
        observation: first.observation,
    })
}
