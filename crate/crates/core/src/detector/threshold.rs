use super::{check_series, BitRecovery, ThresholdBand};
use crate::error::Result;

/// Band-crossing bit recovery. Every maximal run of samples outside the band
/// is one event. Its bit is 1 for an upward excursion, 0 for a downward one;
/// a run that touches both sides is classified by its larger excursion.
pub fn threshold_detect(times: &[f64], values: &[f64], band: ThresholdBand) -> Result<BitRecovery> {
    check_series(times, values)?;
    let mut events = Vec::new();
    let mut run: Option<Run> = None;
    for (i, &v) in values.iter().enumerate() {
        let outside = v > band.high || v < band.low;
        match (&mut run, outside) {
            (None, true) => run = Some(Run::start(i, v)),
            (Some(r), true) => r.extend(i, v),
            (Some(r), false) => {
                events.push(r.finish(times, band));
                run = None;
            }
            (None, false) => {}
        }
    }
    if let Some(r) = run {
        events.push(r.finish(times, band));
    }
    Ok(BitRecovery::from_events(events))
}

struct Run {
    first: usize,
    last: usize,
    max: f64,
    min: f64,
}

impl Run {
    fn start(i: usize, v: f64) -> Self {
        Self {
            first: i,
            last: i,
            max: v,
            min: v,
        }
    }

    fn extend(&mut self, i: usize, v: f64) {
        self.last = i;
        self.max = self.max.max(v);
        self.min = self.min.min(v);
    }

    fn finish(&self, times: &[f64], band: ThresholdBand) -> (f64, f64, f64, bool, f64) {
        let up = self.max - band.high;
        let down = band.low - self.min;
        let bit = up >= down;
        let (score, thr) = if bit {
            (self.max, band.high)
        } else {
            (-self.min, -band.low)
        };
        (times[self.first], times[self.last], score, bit, thr)
    }
}
