use super::schedule::{Channel, PerturbationSchedule, ScheduleEntry, Scheme};
use crate::bits::BitString;
use crate::error::{Error, Result};

fn check(amplitude: f64, period: f64, dt: f64, what: &str) -> Result<()> {
    if !(amplitude > 0.0) {
        return Err(Error::config("attacker.amplitude", "must be > 0"));
    }
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::config(format!("attacker.{what}"), "must be > 0"));
    }
    if period < 2.0 * dt {
        return Err(Error::RateInfeasible {
            period_s: period,
            min_period_s: 2.0 * dt,
        });
    }
    Ok(())
}

/// Deflect/return encoding: each bit period opens with a deflection of
/// `+amplitude` (1) or `-amplitude` (0) for half the period and spends the
/// other half back at the reference. Times start at zero.
pub fn encode_scheme1(
    bits: &BitString,
    amplitude: f64,
    bit_rate: f64,
    channel: Channel,
    dt: f64,
) -> Result<PerturbationSchedule> {
    if !(bit_rate > 0.0) {
        return Err(Error::config("attacker.rate_hz", "must be > 0"));
    }
    let period = 1.0 / bit_rate;
    check(amplitude, period, dt, "rate_hz")?;
    let mut s = PerturbationSchedule::empty(Scheme::DeflectReturn, period, amplitude);
    s.bits = bits.clone();
    for (k, b) in bits.iter().enumerate() {
        let t0 = k as f64 * period;
        let mid = t0 + period / 2.0;
        s.entries.push(ScheduleEntry {
            t_start: t0,
            t_end: mid,
            channel,
            offset: if b { amplitude } else { -amplitude },
        });
        s.entries.push(ScheduleEntry {
            t_start: mid,
            t_end: t0 + period,
            channel,
            offset: 0.0,
        });
    }
    Ok(s)
}

/// Run lengths of consecutive equal bits.
pub(crate) fn runs(bits: &BitString) -> Vec<(bool, usize)> {
    let mut out: Vec<(bool, usize)> = Vec::new();
    for b in bits.iter() {
        match out.last_mut() {
            Some((v, n)) if *v == b => *n += 1,
            _ => out.push((b, 1)),
        }
    }
    out
}

/// Hold-duration encoding: each run of equal bits becomes one deflection in
/// the bit's direction held for `run length * hold`. Adjacent runs differ in
/// value, so direction flips at every boundary. The schedule ends with a
/// zero-offset return of one hold.
pub fn encode_scheme2(
    bits: &BitString,
    amplitude: f64,
    hold: f64,
    channel: Channel,
    dt: f64,
) -> Result<PerturbationSchedule> {
    check(amplitude, hold, dt, "hold_s")?;
    let mut s = PerturbationSchedule::empty(Scheme::HoldDuration, hold, amplitude);
    s.bits = bits.clone();
    let mut t = 0.0;
    for (b, n) in runs(bits) {
        let end = t + n as f64 * hold;
        s.entries.push(ScheduleEntry {
            t_start: t,
            t_end: end,
            channel,
            offset: if b { amplitude } else { -amplitude },
        });
        t = end;
    }
    if !s.entries.is_empty() {
        s.entries.push(ScheduleEntry {
            t_start: t,
            t_end: t + hold,
            channel,
            offset: 0.0,
        });
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DT: f64 = 0.02;

    #[test]
    fn empty_bits_empty_schedule() {
        let s = encode_scheme1(&BitString::default(), 0.0873, 1.0, Channel::Yaw, DT).unwrap();
        assert!(s.entries.is_empty());
    }

    #[test]
    fn two_bit_example() {
        let s = encode_scheme1(&"10".parse().unwrap(), 5f64.to_radians(), 1.0, Channel::Yaw, DT).unwrap();
        let deflections: Vec<_> = s.entries.iter().filter(|e| e.offset != 0.0).collect();
        assert_eq!(deflections.len(), 2);
        assert_eq!((deflections[0].t_start, deflections[0].t_end), (0.0, 0.5));
        assert_eq!((deflections[1].t_start, deflections[1].t_end), (1.0, 1.5));
        assert!((deflections[0].offset - 0.0873).abs() < 1e-4);
        assert!((deflections[1].offset + 0.0873).abs() < 1e-4);
        assert_eq!(s.offset_at(0.75, Channel::Yaw), 0.0);
        assert_eq!(s.offset_at(1.75, Channel::Yaw), 0.0);
    }

    #[test]
    fn too_fast_is_infeasible() {
        let r = encode_scheme1(&"1".parse().unwrap(), 0.1, 30.0, Channel::Yaw, DT);
        assert!(matches!(r, Err(Error::RateInfeasible { .. })));
        assert!(encode_scheme1(&"1".parse().unwrap(), 0.0, 1.0, Channel::Yaw, DT).is_err());
        assert!(encode_scheme2(&"1".parse().unwrap(), 0.1, 0.01, Channel::Yaw, DT).is_err());
    }

    #[test]
    fn scheme2_multiplicities() {
        let s = encode_scheme2(&"10110110".parse().unwrap(), 0.0873, 0.75, Channel::Yaw, DT).unwrap();
        let segs: Vec<f64> = s
            .entries
            .iter()
            .filter(|e| e.offset != 0.0)
            .map(|e| ((e.t_end - e.t_start) / 0.75).round())
            .collect();
        assert_eq!(segs, vec![1.0, 1.0, 2.0, 1.0, 2.0, 1.0]);
        let signs: Vec<bool> = s
            .entries
            .iter()
            .filter(|e| e.offset != 0.0)
            .map(|e| e.offset > 0.0)
            .collect();
        assert_eq!(signs, vec![true, false, true, false, true, false]);
    }

    #[test]
    fn one_vs_two_differs_in_duration_only() {
        let a = encode_scheme2(&"1".parse().unwrap(), 0.1, 0.75, Channel::Yaw, DT).unwrap();
        let b = encode_scheme2(&"11".parse().unwrap(), 0.1, 0.75, Channel::Yaw, DT).unwrap();
        assert_eq!(a.entries.len(), b.entries.len());
        assert_eq!(a.entries[0].offset, b.entries[0].offset);
        let d = |s: &PerturbationSchedule| s.entries[0].t_end - s.entries[0].t_start;
        assert_eq!(d(&b), 2.0 * d(&a));
    }

    proptest! {
        #[test]
        fn scheme1_returns_to_reference_each_bit(
            bits in proptest::collection::vec(any::<bool>(), 0..64),
            rate in 0.5f64..20.0,
        ) {
            let s = encode_scheme1(&BitString(bits.clone()), 0.0873, rate, Channel::Yaw, DT).unwrap();
            let period = 1.0 / rate;
            for (k, &bit) in bits.iter().enumerate() {
                let t_end = (k as f64 + 1.0) * period;
                // the last instant of each symbol sits at the reference
                prop_assert_eq!(s.offset_at(t_end - 1e-6, Channel::Yaw), 0.0);
                // and the symbol opens away from it, in the bit's direction
                let open = s.offset_at(k as f64 * period + 1e-6, Channel::Yaw);
                prop_assert_eq!(open > 0.0, bit);
            }
            for w in s.entries.windows(2) {
                prop_assert!(w[0].t_end <= w[1].t_start + 1e-12);
            }
        }
    }
}
