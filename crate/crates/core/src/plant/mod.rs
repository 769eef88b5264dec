//! Discrete-time stochastic plants.

mod arm;
mod drone;
mod linear;

pub use arm::{arm_forward_kinematics, arm_model, ArmGeometry, ArmPlant};
pub use drone::{Drone, DroneParams, Setpoint};
pub use linear::{measure, step_linear, LinearSystemModel, PlantState};
