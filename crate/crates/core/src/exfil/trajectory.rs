use serde::{Deserialize, Serialize};

use super::encode::encode_scheme1;
use super::schedule::{Channel, PerturbationSchedule, Scheme};
use super::StealthBudget;
use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::plant::ArmGeometry;

/// Straight start-to-end traverse with a perpendicular deflect/return per
/// bit. Before `lead_s` the arm holds the start; after the traverse it holds
/// the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPlan {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub lead_s: f64,
    pub traverse_s: f64,
    /// Deflection magnitude after rounding to the effector quantum.
    pub deviation_m: f64,
    pub waypoint_only: bool,
    pub schedule: PerturbationSchedule,
}

impl TrajectoryPlan {
    fn axis(&self) -> ([f64; 2], f64) {
        let d = [self.end[0] - self.start[0], self.end[1] - self.start[1]];
        let len = d[0].hypot(d[1]);
        ([d[0] / len, d[1] / len], len)
    }

    /// Unit normal, to the left of the direction of travel.
    pub fn normal(&self) -> [f64; 2] {
        let (u, _) = self.axis();
        [-u[1], u[0]]
    }

    pub fn end_time(&self) -> f64 {
        self.lead_s + self.traverse_s
    }

    /// Commanded effector position at time `t`.
    pub fn setpoint(&self, t: f64) -> [f64; 2] {
        let s = ((t - self.lead_s) / self.traverse_s).clamp(0.0, 1.0);
        let off = self.schedule.offset_at(t, Channel::Perpendicular);
        let n = self.normal();
        [
            self.start[0] + s * (self.end[0] - self.start[0]) + off * n[0],
            self.start[1] + s * (self.end[1] - self.start[1]) + off * n[1],
        ]
    }

    /// Signed distance of `p` from the start-end line.
    pub fn deviation_of(&self, p: [f64; 2]) -> f64 {
        let n = self.normal();
        (p[0] - self.start[0]) * n[0] + (p[1] - self.start[1]) * n[1]
    }
}

/// Most bits a segment of length `length_m` can carry when each bit must
/// advance the effector by at least one quantum along the path.
pub fn trajectory_capacity(length_m: f64, geometry: &ArmGeometry) -> usize {
    (length_m / geometry.effector_quantum() + 1e-9).floor() as usize
}

#[allow(clippy::too_many_arguments)]
pub fn encode_trajectory(
    bits: &BitString,
    start: [f64; 2],
    end: [f64; 2],
    deviation_m: f64,
    bit_rate: f64,
    lead_s: f64,
    budget: &StealthBudget,
    geometry: &ArmGeometry,
    waypoint_only: bool,
    dt: f64,
) -> Result<TrajectoryPlan> {
    let length = (end[0] - start[0]).hypot(end[1] - start[1]);
    if !(length > 0.0) {
        return Err(Error::config("arm.end_m", "start and end coincide"));
    }
    if !(deviation_m > 0.0) {
        return Err(Error::config("attacker.amplitude_m", "must be > 0"));
    }
    if lead_s < 0.0 {
        return Err(Error::config("attacker.start_s", "must be >= 0"));
    }
    let max_bits = trajectory_capacity(length, geometry);
    if bits.len() > max_bits {
        return Err(Error::CapacityExceeded {
            requested: bits.len(),
            max_bits,
        });
    }
    let q = geometry.effector_quantum();
    let deviation_m = (deviation_m / q).round().max(1.0) * q;
    if !waypoint_only && deviation_m >= budget.utility_epsilon {
        return Err(Error::Unreachable(format!(
            "deviation {deviation_m:.4} m cannot pass a gate of {:.4} m on every sample",
            budget.utility_epsilon
        )));
    }
    let schedule = encode_scheme1(bits, deviation_m, bit_rate, Channel::Perpendicular, dt)?;
    let schedule = PerturbationSchedule {
        scheme: Scheme::Trajectory,
        ..schedule.shifted(lead_s)
    };
    let plan = TrajectoryPlan {
        start,
        end,
        lead_s,
        traverse_s: bits.len().max(1) as f64 / bit_rate,
        deviation_m,
        waypoint_only,
        schedule,
    };
    let n = plan.normal();
    for p in [start, end] {
        for sign in [-1.0, 0.0, 1.0] {
            geometry.inverse_kinematics([p[0] + sign * deviation_m * n[0], p[1] + sign * deviation_m * n[1]])?;
        }
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DetectorSpec;

    const S: [f64; 2] = [0.20, -0.10];
    const E: [f64; 2] = [0.20, 0.10];

    fn budget() -> StealthBudget {
        StealthBudget::new(DetectorSpec::Euclidean { epsilon_m: 0.004 }, 0.05, 0.004).unwrap()
    }

    fn plan(bits: &str, waypoint_only: bool) -> Result<TrajectoryPlan> {
        encode_trajectory(
            &bits.parse().unwrap(),
            S,
            E,
            0.01,
            5.0,
            0.5,
            &budget(),
            &ArmGeometry::default(),
            waypoint_only,
            0.02,
        )
    }

    #[test]
    fn zero_bits_is_straight() {
        let p = plan("", true).unwrap();
        for k in 0..100 {
            let x = p.setpoint(k as f64 * 0.02);
            assert!(p.deviation_of(x).abs() < 1e-12);
        }
        assert_eq!(p.setpoint(10.0), E);
    }

    #[test]
    fn endpoints_are_exact_and_deviation_quantized() {
        let p = plan("1011001110001111", true).unwrap();
        assert_eq!(p.setpoint(0.0), S);
        let fin = p.setpoint(p.end_time() + 0.1);
        assert!((fin[0] - E[0]).abs() < 1e-12 && (fin[1] - E[1]).abs() < 1e-12);
        let q = ArmGeometry::default().effector_quantum();
        assert!(((p.deviation_m / q).round() * q - p.deviation_m).abs() < 1e-15);
        assert!(p.deviation_of(p.setpoint(0.55)) > 0.0);
        assert!(p.deviation_of(p.setpoint(0.65)).abs() < 1e-12);
        assert!(p.deviation_of(p.setpoint(0.75)) < 0.0);
    }

    #[test]
    fn capacity_limit() {
        let max = trajectory_capacity(0.2, &ArmGeometry::default());
        assert_eq!(max, 43);
        let ok: String = "1".repeat(max);
        assert!(plan(&ok, true).is_ok());
        let too_many: String = "1".repeat(max + 1);
        match plan(&too_many, true) {
            Err(Error::CapacityExceeded { max_bits, .. }) => assert_eq!(max_bits, max),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn full_sampling_defender_blocks_large_deviation() {
        assert!(matches!(plan("1", false), Err(Error::Unreachable(_))));
    }

    #[test]
    fn degenerate_segment() {
        let r = encode_trajectory(
            &"1".parse().unwrap(),
            S,
            S,
            0.01,
            5.0,
            0.5,
            &budget(),
            &ArmGeometry::default(),
            true,
            0.02,
        );
        assert!(r.is_err());
    }
}
