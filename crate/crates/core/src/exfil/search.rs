use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StealthBudget;
use crate::error::{Error, Result};

/// Monte Carlo outcome at one candidate rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateProbe {
    pub rate_hz: f64,
    pub detection_prob: f64,
    pub ber: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSearchOptions {
    pub resolution_hz: f64,
    /// Upper end of the grid, normally `fps / 3`.
    pub max_rate_hz: f64,
    pub ber_ceiling: f64,
    pub n_trials: usize,
}

impl RateSearchOptions {
    /// Grid capped so every bit spans at least three observer frames.
    pub fn for_fps(fps: f64, ber_ceiling: f64, n_trials: usize) -> Self {
        Self {
            resolution_hz: 0.25,
            max_rate_hz: fps / 3.0,
            ber_ceiling,
            n_trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSearch {
    /// Largest feasible rate, 0 when none is.
    pub rate_hz: f64,
    pub detection_prob: f64,
    pub ber: f64,
    pub feasible: bool,
    /// Every probe evaluated, in evaluation order.
    pub probes: Vec<RateProbe>,
}

/// Largest rate on the grid `resolution, 2*resolution, ...` whose detection
/// probability stays within the budget and whose BER stays under the
/// ceiling. `probe(rate, n_trials)` runs the Monte Carlo.
///
/// BER is taken to grow with rate, so the BER-limited rate is found by
/// bisection first. Detection may move either way with rate (slow
/// excursions are tracked fully, fast ones are filtered by the plant), so
/// when the BER-limited rate is detected the search bisects below it only
/// if the slowest rate is itself stealthy.
pub fn max_stealthy_rate<F>(budget: &StealthBudget, opts: &RateSearchOptions, mut probe: F) -> Result<RateSearch>
where
    F: FnMut(f64, usize) -> Result<RateProbe>,
{
    if opts.n_trials < 30 {
        return Err(Error::config("search.trials", "at least 30 trials per probe"));
    }
    if !(opts.resolution_hz > 0.0) || !(opts.max_rate_hz >= opts.resolution_hz) {
        return Err(Error::config("search.max_rate_hz", "grid is empty"));
    }
    let top = (opts.max_rate_hz / opts.resolution_hz + 1e-9).floor() as usize;
    let mut probes = Vec::new();
    let mut seen: BTreeMap<usize, RateProbe> = BTreeMap::new();
    let mut eval = |k: usize, probes: &mut Vec<RateProbe>| -> Result<RateProbe> {
        if let Some(p) = seen.get(&k) {
            return Ok(*p);
        }
        let p = probe(k as f64 * opts.resolution_hz, opts.n_trials)?;
        probes.push(p);
        seen.insert(k, p);
        Ok(p)
    };
    let ber_ok = |p: &RateProbe| p.ber <= opts.ber_ceiling;
    let stealthy = |p: &RateProbe| p.detection_prob <= budget.max_detection_prob;

    // Largest grid index meeting the BER ceiling.
    let ber_limit = if ber_ok(&eval(top, &mut probes)?) {
        Some(top)
    } else if !ber_ok(&eval(1, &mut probes)?) {
        None
    } else {
        let (mut lo, mut hi) = (1usize, top);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if ber_ok(&eval(mid, &mut probes)?) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    };

    let mut best = None;
    if let Some(kb) = ber_limit {
        let pb = eval(kb, &mut probes)?;
        if stealthy(&pb) {
            best = Some(pb);
        } else if kb > 1 {
            let p1 = eval(1, &mut probes)?;
            if stealthy(&p1) {
                let (mut lo, mut hi, mut b) = (1usize, kb, p1);
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    let p = eval(mid, &mut probes)?;
                    if stealthy(&p) && ber_ok(&p) {
                        lo = mid;
                        b = p;
                    } else {
                        hi = mid;
                    }
                }
                best = Some(b);
            }
        }
    }
    Ok(match best {
        Some(p) => RateSearch {
            rate_hz: p.rate_hz,
            detection_prob: p.detection_prob,
            ber: p.ber,
            feasible: true,
            probes,
        },
        None => RateSearch {
            rate_hz: 0.0,
            detection_prob: probes.iter().map(|p| p.detection_prob).fold(f64::NAN, f64::min),
            ber: probes.iter().map(|p| p.ber).fold(f64::NAN, f64::min),
            feasible: false,
            probes,
        },
    })
}

/// Smallest amplitude in `(low, high]` whose BER meets `target_ber`, to
/// within `tolerance`. `probe(amplitude)` returns the Monte Carlo BER.
pub fn min_snr_amplitude<F>(target_ber: f64, low: f64, high: f64, tolerance: f64, mut probe: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(0.0..0.5).contains(&target_ber) {
        return Err(Error::config("search.target_ber", "must be in [0, 0.5)"));
    }
    if !(high > low) || !(tolerance > 0.0) {
        return Err(Error::config("search.amplitude", "need low < high and tolerance > 0"));
    }
    let top = probe(high)?;
    if top > target_ber {
        return Err(Error::Unreachable(format!(
            "BER {top:.4} at the largest amplitude {high:.5} exceeds target {target_ber}"
        )));
    }
    let (mut lo, mut hi) = (low, high);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? <= target_ber {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
