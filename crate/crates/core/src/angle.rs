//! Angle conventions: radians internally, wrapped to (-pi, pi].

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub fn wrap(theta: f64) -> f64 {
    if !theta.is_finite() {
        return theta;
    }
    let mut w = theta.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid maps -pi to pi already; the only value left to fix is exactly -pi.
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

pub fn deg(d: f64) -> f64 {
    d.to_radians()
}

/// Parses an angle with an explicit unit suffix: `5deg`, `0.087rad`.
pub fn parse_angle(s: &str) -> Result<f64> {
    let s = s.trim();
    let (num, to_rad): (&str, fn(f64) -> f64) = if let Some(v) = s.strip_suffix("deg") {
        (v, f64::to_radians)
    } else if let Some(v) = s.strip_suffix("rad") {
        (v, |x| x)
    } else {
        return Err(Error::Parse(format!(
            "angle `{s}` needs an explicit unit suffix (deg or rad)"
        )));
    };
    num.trim()
        .parse::<f64>()
        .map(to_rad)
        .map_err(|e| Error::Parse(format!("angle `{s}`: {e}")))
}
