use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::angle::wrap;
use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Mat, Vector};

use super::linear::{step_linear, LinearSystemModel, PlantState};

/// State layout `[x, y, z, yaw, vx, vy, vz, yaw_rate]`.
pub const YAW: usize = 3;

/// Gains and flight-plan geometry of the PD-stabilised quadrotor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DroneParams {
    pub kp: f64,
    pub kd: f64,
    pub kp_yaw: f64,
    pub kd_yaw: f64,
    #[serde(rename = "hover_alt_m")]
    pub hover_alt: f64,
    #[serde(rename = "circle_radius_m")]
    pub circle_radius: f64,
    #[serde(rename = "circle_period_s")]
    pub circle_period: f64,
}

impl Default for DroneParams {
    fn default() -> Self {
        Self {
            kp: 4.0,
            kd: 3.2,
            kp_yaw: 300.0,
            kd_yaw: 28.0,
            hover_alt: 0.5,
            circle_radius: 1.0,
            circle_period: 10.0,
        }
    }
}

/// Position + yaw reference with velocity and acceleration feedforward.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Setpoint {
    /// `[x, y, z, yaw]`
    pub pose: [f64; 4],
    pub velocity: [f64; 4],
    pub acceleration: [f64; 4],
}

impl Setpoint {
    pub fn hold(pose: [f64; 4]) -> Self {
        Self {
            pose,
            ..Default::default()
        }
    }
}

impl DroneParams {
    fn gains(&self) -> [(f64, f64); 4] {
        [
            (self.kp, self.kd),
            (self.kp, self.kd),
            (self.kp, self.kd),
            (self.kp_yaw, self.kd_yaw),
        ]
    }

    /// Feedback gain `K` (4x8) so that `u = K (ref - x) + a_ff`.
    pub fn feedback_gain(&self) -> Mat {
        let mut k = Mat::zeros(4, 8);
        for (i, (p, d)) in self.gains().into_iter().enumerate() {
            k[(i, i)] = p;
            k[(i, i + 4)] = d;
        }
        k
    }

    /// Hover setpoint at the configured altitude.
    pub fn hover_setpoint(&self) -> Setpoint {
        Setpoint::hold([0.0, 0.0, self.hover_alt, 0.0])
    }

    /// Point on the surveillance circle at time `t`, yaw held at zero.
    pub fn circle_setpoint(&self, t: f64) -> Setpoint {
        let w = 2.0 * std::f64::consts::PI / self.circle_period;
        let (s, c) = (w * t).sin_cos();
        let r = self.circle_radius;
        Setpoint {
            pose: [r * c, r * s, self.hover_alt, 0.0],
            velocity: [-r * w * s, r * w * c, 0.0, 0.0],
            acceleration: [-r * w * w * c, -r * w * w * s, 0.0, 0.0],
        }
    }
}

/// Quadrotor abstracted as four decoupled double integrators (x, y, z, yaw)
/// under PD tracking.
#[derive(Debug, Clone)]
pub struct Drone {
    params: DroneParams,
    open_loop: LinearSystemModel,
    closed_loop: LinearSystemModel,
}

impl Drone {
    /// `process_var` are per-step velocity-increment variances for
    /// `[x, y, z, yaw]`; `measurement_var` are pose-sensor variances.
    pub fn new(params: DroneParams, process_var: [f64; 4], measurement_var: [f64; 4], dt: f64) -> Result<Self> {
        for (name, v) in [
            ("drone.kp", params.kp),
            ("drone.kd", params.kd),
            ("drone.kp_yaw", params.kp_yaw),
            ("drone.kd_yaw", params.kd_yaw),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "gain must be > 0"));
            }
        }
        if !(params.circle_period > 0.0) {
            return Err(Error::config("drone.circle_period_s", "must be > 0"));
        }
        let mut a = Mat::identity(8, 8);
        let mut b = Mat::zeros(8, 4);
        let mut g = Mat::zeros(8, 4);
        let mut h = Mat::zeros(4, 8);
        for i in 0..4 {
            a[(i, i + 4)] = dt;
            b[(i + 4, i)] = dt;
            g[(i + 4, i)] = 1.0;
            h[(i, i)] = 1.0;
        }
        let q = Mat::from_diagonal(&Vector::from_row_slice(&process_var));
        let r = Mat::from_diagonal(&Vector::from_row_slice(&measurement_var));
        let open_loop = LinearSystemModel::new(a.clone(), b.clone(), g.clone(), h.clone(), q.clone(), r.clone(), dt)?
            .with_angles(vec![YAW], vec![YAW]);
        let a_cl = &a - &b * params.feedback_gain();
        let rho = spectral_radius(&a_cl);
        if !(rho < 1.0) {
            return Err(Error::config(
                "drone",
                format!("closed loop unstable at dt={dt}: spectral radius {rho:.4}"),
            ));
        }
        let closed_loop = LinearSystemModel::new(a_cl, b, g, h, q, r, dt)?.with_angles(vec![YAW], vec![YAW]);
        Ok(Self {
            params,
            open_loop,
            closed_loop,
        })
    }

    pub fn params(&self) -> &DroneParams {
        &self.params
    }

    pub fn open_loop(&self) -> &LinearSystemModel {
        &self.open_loop
    }

    /// Closed-loop model `x' = (A - B K) x + B u_ff` whose input is
    /// [`Drone::feedforward`] of the reference. This is what a defender who
    /// knows the controller and the legitimate reference filters against.
    pub fn closed_loop(&self) -> &LinearSystemModel {
        &self.closed_loop
    }

    pub fn feedforward(&self, sp: &Setpoint) -> Vector {
        let mut reference = Vector::zeros(8);
        for i in 0..4 {
            reference[i] = sp.pose[i];
            reference[i + 4] = sp.velocity[i];
        }
        self.params.feedback_gain() * reference + Vector::from_row_slice(&sp.acceleration)
    }

    pub fn control(&self, state: &PlantState, sp: &Setpoint) -> Vector {
        let x = &state.x;
        Vector::from_iterator(
            4,
            self.params.gains().into_iter().enumerate().map(|(i, (kp, kd))| {
                let e = if i == YAW {
                    wrap(sp.pose[i] - x[i])
                } else {
                    sp.pose[i] - x[i]
                };
                kp * e + kd * (sp.velocity[i] - x[i + 4]) + sp.acceleration[i]
            }),
        )
    }

    /// PD toward the setpoint, then one noisy step of the open-loop plant.
    pub fn step<R: Rng + ?Sized>(&self, state: &PlantState, sp: &Setpoint, rng: &mut R) -> Result<PlantState> {
        let u = self.control(state, sp);
        step_linear(&self.open_loop, state, &u, rng)
    }

    pub fn state_at(&self, sp: &Setpoint, t: f64) -> PlantState {
        let mut x = Vector::zeros(8);
        for i in 0..4 {
            x[i] = sp.pose[i];
            x[i + 4] = sp.velocity[i];
        }
        PlantState::new(x, t)
    }
}
