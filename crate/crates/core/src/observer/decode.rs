use serde::{Deserialize, Serialize};

use super::ObservationSequence;
use crate::bits::{Symbol, SymbolString};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub symbols: SymbolString,
    /// One entry per symbol; 0 for erasures.
    pub confidence: Vec<f64>,
}

/// Attacker-side knowledge for deflect/return decoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scheme1Decoder {
    pub bit_rate: f64,
    pub amplitude_hint: f64,
    /// Time the first symbol was commanded.
    pub start_s: f64,
    /// Number of symbols; inferred from the observation span when `None`.
    pub n_bits: Option<usize>,
    /// Actuation delay between command and visible motion.
    pub delay_s: f64,
}

impl Scheme1Decoder {
    pub fn new(bit_rate: f64, amplitude_hint: f64, start_s: f64) -> Self {
        Self {
            bit_rate,
            amplitude_hint,
            start_s,
            n_bits: None,
            delay_s: 0.0,
        }
    }
}

fn frame_period(obs: &ObservationSequence) -> Option<f64> {
    let n = obs.frames.len();
    (n >= 2).then(|| (obs.frames[n - 1].t - obs.frames[0].t) / (n - 1) as f64)
}

fn window(obs: &ObservationSequence, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
    let lo = obs.frames.partition_point(|f| f.t < a);
    obs.frames[lo..]
        .iter()
        .take_while(move |f| f.t < b)
        .filter_map(|f| f.value)
}

fn mean(it: impl Iterator<Item = f64>) -> Option<(f64, usize)> {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| (s / n as f64, n))
}

/// Matched decoding of deflect/return symbols. Each bit window is
/// correlated against the mean-removed template (+1 first half, -1 second
/// half), which reduces to the difference of the half-window means; its sign
/// gives the bit. A window with too few valid frames, or an empty half, is
/// an erasure.
pub fn decode_scheme1(obs: &ObservationSequence, dec: &Scheme1Decoder) -> Result<Decoded> {
    if !(dec.bit_rate > 0.0) {
        return Err(Error::config("decoder.rate_hz", "must be > 0"));
    }
    if !(dec.amplitude_hint > 0.0) {
        return Err(Error::config("decoder.amplitude", "must be > 0"));
    }
    let period = 1.0 / dec.bit_rate;
    let origin = dec.start_s + dec.delay_s;
    let n_bits = match dec.n_bits {
        Some(n) => n,
        None => obs
            .frames
            .last()
            .map_or(0, |f| ((f.t - origin) / period + 1e-9).floor().max(0.0) as usize),
    };
    let per_bit = frame_period(obs).map_or(1.0, |fp| period / fp);
    let min_frames = ((per_bit + 1e-9).floor() as usize).clamp(1, 3);
    let mut symbols = Vec::with_capacity(n_bits);
    let mut confidence = Vec::with_capacity(n_bits);
    for k in 0..n_bits {
        let a = origin + k as f64 * period;
        let m = a + period / 2.0;
        let b = a + period;
        match (mean(window(obs, a, m)), mean(window(obs, m, b))) {
            (Some((h1, n1)), Some((h2, n2))) if n1 + n2 >= min_frames => {
                let stat = h1 - h2;
                symbols.push(Symbol::from(stat > 0.0));
                confidence.push(stat.abs() / dec.amplitude_hint);
            }
            _ => {
                symbols.push(Symbol::Erased);
                confidence.push(0.0);
            }
        }
    }
    Ok(Decoded {
        symbols: SymbolString(symbols),
        confidence,
    })
}

/// Duration-aware decoding of hold-duration symbols. Valid frames are
/// labelled by direction (beyond half the amplitude either way, or neutral);
/// consecutive same-direction plateaus are merged, and each plateau emits
/// `round(duration / hold)` copies of its bit. Plateaus shorter than half a
/// hold become a single erasure.
pub fn decode_scheme2(obs: &ObservationSequence, amplitude_hint: f64, hold: f64) -> Result<Decoded> {
    if !(amplitude_hint > 0.0) {
        return Err(Error::config("decoder.amplitude", "must be > 0"));
    }
    if !(hold > 0.0) {
        return Err(Error::config("decoder.hold_s", "must be > 0"));
    }
    let fp = frame_period(obs).unwrap_or(0.0);
    let gate = amplitude_hint / 2.0;
    // (direction, first t, last t, sum |v|, count)
    let mut plateaus: Vec<(bool, f64, f64, f64, usize)> = Vec::new();
    for (t, v) in obs.valid() {
        let dir = if v > gate {
            true
        } else if v < -gate {
            false
        } else {
            continue;
        };
        match plateaus.last_mut() {
            Some(p) if p.0 == dir => {
                p.2 = t;
                p.3 += v.abs();
                p.4 += 1;
            }
            _ => plateaus.push((dir, t, t, v.abs(), 1)),
        }
    }
    let mut symbols = Vec::new();
    let mut confidence = Vec::new();
    for (dir, a, b, s, n) in plateaus {
        let duration = b - a + fp;
        let conf = s / n as f64 / amplitude_hint;
        if duration < hold / 2.0 {
            symbols.push(Symbol::Erased);
            confidence.push(0.0);
            continue;
        }
        let copies = (duration / hold).round() as usize;
        for _ in 0..copies {
            symbols.push(Symbol::from(dir));
            confidence.push(conf);
        }
    }
    Ok(Decoded {
        symbols: SymbolString(symbols),
        confidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::BitString;
    use crate::exfil::{encode_scheme1, encode_scheme2, Channel, PerturbationSchedule};
    use crate::observer::{observe_series, Frame, ObserverParams};
    use crate::rng::seeded;
    use proptest::prelude::*;

    const DT: f64 = 0.02;

    fn render(s: &PerturbationSchedule, t_end: f64) -> (Vec<f64>, Vec<f64>) {
        let n = (t_end / 0.005) as usize;
        let t: Vec<f64> = (0..n).map(|k| k as f64 * 0.005).collect();
        let v = t.iter().map(|&x| s.offset_at(x, Channel::Yaw)).collect();
        (t, v)
    }

    fn clean(s: &PerturbationSchedule, t_end: f64, seed: u64) -> ObservationSequence {
        let (t, v) = render(s, t_end);
        observe_series(&t, &v, &ObserverParams::default(), &mut seeded(seed)).unwrap()
    }

    #[test]
    fn all_dropout_window_erases() {
        let frames = (0..90)
            .map(|k| {
                let t = k as f64 / 30.0;
                Frame {
                    t,
                    value: if (1.0..2.0).contains(&t) { None } else { Some(0.1) },
                }
            })
            .collect();
        let obs = ObservationSequence { frames };
        let d = decode_scheme1(&obs, &Scheme1Decoder::new(1.0, 0.1, 0.0)).unwrap();
        assert_eq!(d.symbols.0[1], Symbol::Erased);
        assert_eq!(d.confidence[1], 0.0);
    }

    #[test]
    fn constant_offset_does_not_matter() {
        let bits: BitString = "1100101".parse().unwrap();
        let s = encode_scheme1(&bits, 0.0873, 2.0, Channel::Yaw, DT).unwrap();
        let obs = clean(&s, 4.0, 9);
        let dec = Scheme1Decoder::new(2.0, 0.0873, 0.0);
        let a = decode_scheme1(&obs, &dec).unwrap();
        let b = decode_scheme1(&obs.offset(-0.7), &dec).unwrap();
        assert_eq!(a.symbols, b.symbols);
        assert_eq!(a.symbols.hard_bits(), bits);
    }

    #[test]
    fn hold_three_halves_gives_two_bits() {
        let frames = (0..90)
            .map(|k| {
                let t = k as f64 / 30.0;
                Frame {
                    t,
                    value: Some(if t < 1.5 { 0.0873 } else { 0.0 }),
                }
            })
            .collect();
        let d = decode_scheme2(&ObservationSequence { frames }, 0.0873, 0.75).unwrap();
        assert_eq!(d.symbols.to_string(), "11");
    }

    #[test]
    fn short_plateau_erases() {
        let frames = (0..60)
            .map(|k| Frame {
                t: k as f64 / 30.0,
                value: Some(if k < 5 { -0.1 } else { 0.0 }),
            })
            .collect();
        let d = decode_scheme2(&ObservationSequence { frames }, 0.1, 0.75).unwrap();
        assert_eq!(d.symbols.to_string(), "E");
    }

    #[test]
    fn the_example_byte() {
        let bits: BitString = "10110110".parse().unwrap();
        let s = encode_scheme2(&bits, 0.0873, 0.75, Channel::Yaw, DT).unwrap();
        let d = decode_scheme2(&clean(&s, s.end() + 0.5, 1), 0.0873, 0.75).unwrap();
        assert_eq!(d.symbols.to_string(), "10110110");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn scheme1_clean_round_trip(
            bits in proptest::collection::vec(any::<bool>(), 0..=64),
            rate_idx in 0usize..3,
            seed in any::<u64>(),
        ) {
            let rate = [1.0, 5.0, 10.0][rate_idx];
            let bits = BitString(bits);
            let s = encode_scheme1(&bits, 0.0873, rate, Channel::Yaw, DT).unwrap();
            let obs = clean(&s, bits.len() as f64 / rate + 0.5, seed);
            let mut dec = Scheme1Decoder::new(rate, 0.0873, 0.0);
            dec.n_bits = Some(bits.len());
            let d = decode_scheme1(&obs, &dec).unwrap();
            prop_assert_eq!(d.symbols, bits.to_symbols());
        }

        #[test]
        fn scheme2_clean_round_trip(
            bits in proptest::collection::vec(any::<bool>(), 0..=64),
            seed in any::<u64>(),
        ) {
            let bits = BitString(bits);
            let s = encode_scheme2(&bits, 0.0873, 0.75, Channel::Yaw, DT).unwrap();
            let obs = clean(&s, s.end() + 0.5, seed);
            let d = decode_scheme2(&obs, 0.0873, 0.75).unwrap();
            prop_assert_eq!(d.symbols, bits.to_symbols());
        }
    }
}
