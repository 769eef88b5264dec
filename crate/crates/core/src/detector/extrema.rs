use std::cmp::Ordering;

use super::{check_series, BitRecovery};
use crate::error::{Error, Result};

/// Indices of local maxima; a flat top counts once, at its middle sample.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
            }
        }
        i += 1;
    }
    peaks
}

/// Topographic prominence of each peak: height above the higher of the two
/// lowest points reached before climbing to something taller on each side.
pub fn topographic_prominence(x: &[f64], peaks: &[usize]) -> Vec<f64> {
    peaks
        .iter()
        .map(|&p| {
            let h = x[p];
            let mut left_min = h;
            for i in (0..p).rev() {
                if x[i] > h {
                    break;
                }
                left_min = left_min.min(x[i]);
            }
            let mut right_min = h;
            for &v in &x[p + 1..] {
                if v > h {
                    break;
                }
                right_min = right_min.min(v);
            }
            h - left_min.max(right_min)
        })
        .collect()
}

/// Keeps the most prominent peaks, dropping any within `min_gap` seconds of a
/// peak already kept.
fn enforce_separation(times: &[f64], peaks: &[usize], prom: &[f64], min_gap: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..peaks.len()).collect();
    order.sort_by(|&a, &b| prom[b].partial_cmp(&prom[a]).unwrap_or(Ordering::Equal));
    let mut kept: Vec<usize> = Vec::new();
    for k in order {
        let t = times[peaks[k]];
        if kept.iter().all(|&j| (times[peaks[j]] - t).abs() >= min_gap) {
            kept.push(k);
        }
    }
    kept.into_iter().map(|k| peaks[k]).collect()
}

fn qualifying(times: &[f64], x: &[f64], min_prom: f64, min_gap: f64) -> Vec<(usize, f64)> {
    let peaks = local_maxima(x);
    let prom = topographic_prominence(x, &peaks);
    let (p, pr): (Vec<usize>, Vec<f64>) = peaks
        .iter()
        .zip(&prom)
        .filter(|(&i, &q)| q >= min_prom && x[i] >= min_prom)
        .map(|(&i, &q)| (i, q))
        .unzip();
    let kept = enforce_separation(times, &p, &pr, min_gap);
    p.into_iter().zip(pr).filter(|(i, _)| kept.contains(i)).collect()
}

/// Prominence-based bit recovery on a reference-detrended signal. Maxima
/// reaching `+min_prominence` read as 1, minima reaching `-min_prominence`
/// read as 0; peaks of the same sign closer than `min_separation` seconds
/// are collapsed onto the most prominent.
pub fn extrema_detect(times: &[f64], values: &[f64], min_prominence: f64, min_separation: f64) -> Result<BitRecovery> {
    check_series(times, values)?;
    if !(min_prominence > 0.0) {
        return Err(Error::config("detector.min_prominence", "must be > 0"));
    }
    if !(min_separation >= 0.0) {
        return Err(Error::config("detector.min_separation", "must be >= 0"));
    }
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    let mut events: Vec<(f64, f64, f64, bool, f64)> = Vec::new();
    for (i, q) in qualifying(times, values, min_prominence, min_separation) {
        events.push((times[i], times[i], q, true, min_prominence));
    }
    for (i, q) in qualifying(times, &neg, min_prominence, min_separation) {
        events.push((times[i], times[i], q, false, min_prominence));
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    Ok(BitRecovery::from_events(events))
}

/// Subtracts a centred moving average spanning `window_s` seconds. A zero
/// window returns the input unchanged.
pub fn detrend(times: &[f64], values: &[f64], window_s: f64) -> Result<Vec<f64>> {
    check_series(times, values)?;
    if !(window_s >= 0.0) {
        return Err(Error::config("detector.detrend_s", "must be >= 0"));
    }
    if window_s == 0.0 {
        return Ok(values.to_vec());
    }
    let mut prefix = Vec::with_capacity(values.len() + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    // Slack keeps samples on the window edge inside despite rounding.
    let half = window_s / 2.0 + 1e-9;
    let (mut lo, mut hi) = (0, 0);
    let mut out = Vec::with_capacity(values.len());
    for (i, &t) in times.iter().enumerate() {
        while times[lo] < t - half {
            lo += 1;
        }
        while hi < times.len() && times[hi] <= t + half {
            hi += 1;
        }
        out.push(values[i] - (prefix[hi] - prefix[lo]) / (hi - lo) as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prominence_matches_hand_computation() {
        let x = [0.0, 3.0, 1.0, 5.0, 2.0, 4.0, 0.0];
        let p = local_maxima(&x);
        assert_eq!(p, vec![1, 3, 5]);
        let pr = topographic_prominence(&x, &p);
        assert_eq!(pr, vec![2.0, 5.0, 2.0]);
    }

    #[test]
    fn detrend_matches_direct_average() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|x| (x * 1.7).sin() + 0.3 * x).collect();
        let d = detrend(&t, &v, 1.0).unwrap();
        for i in 0..t.len() {
            let win: Vec<f64> = (0..t.len())
                .filter(|&j| (t[j] - t[i]).abs() <= 0.5 + 1e-12)
                .map(|j| v[j])
                .collect();
            let m = win.iter().sum::<f64>() / win.len() as f64;
            assert!((d[i] - (v[i] - m)).abs() < 1e-9, "{i}");
        }
        assert_eq!(detrend(&t, &v, 0.0).unwrap(), v);
    }

    #[test]
    fn detrend_removes_offset_from_peaks() {
        let t: Vec<f64> = (0..400).map(|i| i as f64 * 0.02).collect();
        // Alternating +/-1 pulses at 1 Hz on top of a 0.8 offset.
        let v: Vec<f64> = t
            .iter()
            .map(|x| {
                let ph = x.fract();
                let sign = if (x.floor() as i64) % 2 == 0 { 1.0 } else { -1.0 };
                0.8 + if ph > 0.25 && ph < 0.5 { sign } else { 0.0 }
            })
            .collect();
        let raw = extrema_detect(&t, &v, 0.5, 0.5).unwrap();
        let flat = extrema_detect(&t, &detrend(&t, &v, 8.0).unwrap(), 0.5, 0.5).unwrap();
        assert!(flat.bits.len() > raw.bits.len());
        assert!(flat.bits.to_string().starts_with("1010"));
    }

    #[test]
    fn plateau_counts_once() {
        let x = [0.0, 1.0, 1.0, 1.0, 0.0];
        assert_eq!(local_maxima(&x), vec![2]);
    }

    #[test]
    fn alternating_pulses_decode() {
        let dt = 0.02;
        let t: Vec<f64> = (0..400).map(|k| k as f64 * dt).collect();
        let bits = [true, false, true, true, false];
        let v: Vec<f64> = t
            .iter()
            .map(|&s| {
                let i = (s / 1.6) as usize;
                let phase = (s % 1.6) / 1.6;
                let shape = (std::f64::consts::PI * phase).sin();
                if i < bits.len() {
                    if bits[i] {
                        0.08 * shape
                    } else {
                        -0.08 * shape
                    }
                } else {
                    0.0
                }
            })
            .collect();
        let out = extrema_detect(&t, &v, 0.04, 0.8).unwrap();
        assert_eq!(out.bits.to_string(), "10110");
        assert!(out.attacked());
    }

    #[test]
    fn flat_signal_has_no_extrema() {
        let t: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let out = extrema_detect(&t, &vec![0.0; 50], 0.01, 1.0).unwrap();
        assert!(out.bits.is_empty());
    }

    #[test]
    fn separation_collapses_close_peaks() {
        let t: Vec<f64> = (0..7).map(|k| k as f64 * 0.1).collect();
        let v = [0.0, 1.0, 0.0, 2.0, 0.0, 0.0, 0.0];
        let out = extrema_detect(&t, &v, 0.5, 0.3).unwrap();
        assert_eq!(out.bits.to_string(), "1");
        assert_eq!(out.verdicts[0].t_window.0, t[3]);
    }
}
