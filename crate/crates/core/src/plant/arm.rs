use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

use super::linear::{step_linear, LinearSystemModel, PlantState};

/// Two-link planar arm driven by stepper motors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmGeometry {
    pub l1: f64,
    pub l2: f64,
    /// Smallest joint motion a motor can make (rad).
    pub step_quantum: f64,
}

impl Default for ArmGeometry {
    fn default() -> Self {
        Self {
            l1: 0.135,
            l2: 0.147,
            step_quantum: 1.8f64.to_radians(),
        }
    }
}

impl ArmGeometry {
    pub fn new(l1: f64, l2: f64, step_quantum: f64) -> Result<Self> {
        let g = Self { l1, l2, step_quantum };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l1 > 0.0) {
            return Err(Error::config("arm.l1_m", "must be > 0"));
        }
        if !(self.l2 > 0.0) {
            return Err(Error::config("arm.l2_m", "must be > 0"));
        }
        if !(self.step_quantum > 0.0) {
            return Err(Error::config("arm.step_quantum_deg", "must be > 0"));
        }
        Ok(())
    }

    pub fn quantize(&self, theta: f64) -> f64 {
        (theta / self.step_quantum).round() * self.step_quantum
    }

    /// Effector displacement produced by one step of the distal joint.
    pub fn effector_quantum(&self) -> f64 {
        self.step_quantum * self.l2
    }

    /// Elbow-down inverse kinematics.
    pub fn inverse_kinematics(&self, xy: [f64; 2]) -> Result<(f64, f64)> {
        let [x, y] = xy;
        let c2 = (x * x + y * y - self.l1 * self.l1 - self.l2 * self.l2) / (2.0 * self.l1 * self.l2);
        if !(-1.0..=1.0).contains(&c2) {
            return Err(Error::config(
                "arm.waypoint",
                format!("({x:.4}, {y:.4}) is outside the reachable annulus"),
            ));
        }
        let t2 = c2.acos();
        let t1 = y.atan2(x) - (self.l2 * t2.sin()).atan2(self.l1 + self.l2 * t2.cos());
        Ok((t1, t2))
    }
}

/// Joint and effector positions of the arm.
pub fn arm_forward_kinematics(geom: &ArmGeometry, theta1: f64, theta2: f64) -> ([f64; 2], [f64; 2]) {
    let joint = [geom.l1 * theta1.cos(), geom.l1 * theta1.sin()];
    let s = theta1 + theta2;
    let effector = [joint[0] + geom.l2 * s.cos(), joint[1] + geom.l2 * s.sin()];
    (joint, effector)
}

/// Joint-space tracking model: each joint closes a fraction `gain` of the gap
/// to its commanded angle every step, plus vibration noise.
pub fn arm_model(gain: f64, joint_var: f64, encoder_var: f64, dt: f64) -> Result<LinearSystemModel> {
    if !(gain > 0.0 && gain <= 1.0) {
        return Err(Error::config("arm.tracking_gain", "must be in (0, 1]"));
    }
    let i2 = Mat::identity(2, 2);
    LinearSystemModel::new(
        &i2 * (1.0 - gain),
        &i2 * gain,
        i2.clone(),
        i2.clone(),
        &i2 * joint_var,
        &i2 * encoder_var,
        dt,
    )
}

#[derive(Debug, Clone)]
pub struct ArmPlant {
    pub geometry: ArmGeometry,
    pub model: LinearSystemModel,
}

impl ArmPlant {
    pub fn new(geometry: ArmGeometry, model: LinearSystemModel) -> Result<Self> {
        geometry.validate()?;
        if model.state_dim() != 2 || model.input_dim() != 2 {
            return Err(Error::Dimension {
                what: "arm model",
                expected: "2 states, 2 inputs".into(),
                got: format!("{} states, {} inputs", model.state_dim(), model.input_dim()),
            });
        }
        Ok(Self { geometry, model })
    }

    /// Motor command for an effector target: IK, then snapped to whole steps.
    pub fn command_for(&self, xy: [f64; 2]) -> Result<Vector> {
        let (t1, t2) = self.geometry.inverse_kinematics(xy)?;
        Ok(Vector::from_vec(vec![
            self.geometry.quantize(t1),
            self.geometry.quantize(t2),
        ]))
    }

    pub fn step<R: Rng + ?Sized>(&self, state: &PlantState, command: &Vector, rng: &mut R) -> Result<PlantState> {
        let q = command.map(|t| self.geometry.quantize(t));
        step_linear(&self.model, state, &q, rng)
    }

    pub fn effector(&self, state: &PlantState) -> ([f64; 2], [f64; 2]) {
        arm_forward_kinematics(&self.geometry, state.x[0], state.x[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: [f64; 2], b: [f64; 2]) -> bool {
        (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12
    }

    #[test]
    fn fk_trivial_poses() {
        let g = ArmGeometry::new(1.0, 1.0, 0.01).unwrap();
        let (j, e) = arm_forward_kinematics(&g, 0.0, 0.0);
        assert!(close(j, [1.0, 0.0]) && close(e, [2.0, 0.0]));
        let (j, e) = arm_forward_kinematics(&g, FRAC_PI_2, 0.0);
        assert!(close(j, [0.0, 1.0]) && close(e, [0.0, 2.0]));
    }

    #[test]
    fn fk_matches_reference_evaluation() {
        // independent evaluation via complex-number rotation
        let (l1, l2, t1, t2) = (0.135f64, 0.147f64, 0.3f64, -0.5f64);
        let rot = |r: f64, a: f64| (r * a.cos(), r * a.sin());
        let j = rot(l1, t1);
        let f = rot(l2, t1 + t2);
        let expected = [j.0 + f.0, j.1 + f.1];
        let g = ArmGeometry::new(l1, l2, 0.01).unwrap();
        let (_, e) = arm_forward_kinematics(&g, t1, t2);
        assert!(close(e, expected));
    }

    #[test]
    fn ik_inverts_fk() {
        let g = ArmGeometry::default();
        let (t1, t2) = g.inverse_kinematics([0.2, 0.05]).unwrap();
        let (_, e) = arm_forward_kinematics(&g, t1, t2);
        assert!((e[0] - 0.2).abs() < 1e-12 && (e[1] - 0.05).abs() < 1e-12);
        assert!(g.inverse_kinematics([1.0, 0.0]).is_err());
    }

    #[test]
    fn default_step_is_1_8_degrees() {
        assert!((ArmGeometry::default().step_quantum - 0.031_415_926_5).abs() < 1e-9);
        assert!(ArmGeometry::new(0.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn commands_are_whole_steps() {
        let g = ArmGeometry::default();
        let plant = ArmPlant::new(g, arm_model(0.8, 0.0, 1e-8, 0.02).unwrap()).unwrap();
        let mut s = PlantState::new(Vector::zeros(2), 0.0);
        let cmd = Vector::from_vec(vec![0.1234, -0.4321]);
        for _ in 0..200 {
            s = plant.step(&s, &cmd, &mut seeded(1)).unwrap();
        }
        for i in 0..2 {
            let steps = s.x[i] / g.step_quantum;
            assert!((steps - steps.round()).abs() < 1e-9);
        }
    }
}
