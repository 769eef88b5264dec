use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of sending one frame at a given rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkTrial {
    pub bits: usize,
    pub bit_errors: usize,
    pub erasures: usize,
    pub frame_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub rate_hz: f64,
    pub ber: f64,
    pub erasure_rate: f64,
    pub frame_failure_rate: f64,
    pub goodput_bps: f64,
}

/// Monte Carlo capacity table. `run(rate, trial)` simulates one frame; the
/// caller owns seeding so results do not depend on scheduling.
pub fn capacity_estimate<F>(rates: &[f64], trials: usize, payload_fraction: f64, run: F) -> Result<Vec<CapacityRow>>
where
    F: Fn(f64, usize) -> Result<LinkTrial> + Sync,
{
    if rates.is_empty() {
        return Err(Error::config("rates", "rate grid is empty"));
    }
    if trials == 0 {
        return Err(Error::config("trials", "must be >= 1"));
    }
    rates
        .iter()
        .map(|&rate| {
            let outcomes = (0..trials)
                .into_par_iter()
                .map(|k| run(rate, k))
                .collect::<Result<Vec<_>>>()?;
            let bits: usize = outcomes.iter().map(|o| o.bits).sum();
            let errs: usize = outcomes.iter().map(|o| o.bit_errors).sum();
            let eras: usize = outcomes.iter().map(|o| o.erasures).sum();
            let fails = outcomes.iter().filter(|o| !o.frame_ok).count();
            let denom = bits.max(1) as f64;
            let ffr = fails as f64 / trials as f64;
            Ok(CapacityRow {
                rate_hz: rate,
                ber: (errs + eras) as f64 / denom,
                erasure_rate: eras as f64 / denom,
                frame_failure_rate: ffr,
                goodput_bps: rate * (1.0 - ffr) * payload_fraction,
            })
        })
        .collect()
}
