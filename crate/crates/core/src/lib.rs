//! Covert data exfiltration through the physical actuation of cyber-physical
//! systems, and the state-estimation detectors that try to catch it.
//!
//! The crate is organised around the attacker/defender loop:
//!
//! - [`plant`]: discrete-time stochastic plants (generic linear model, a
//!   two-link planar arm, and a PD-stabilised quadrotor).
//! - [`estimator`]: the defender's Kalman filter.
//! - [`detector`]: residual, threshold, extrema, gate, variance and
//!   whiteness detectors.
//! - [`exfil`]: attacker-side encoders and stealth-constrained searches.
//! - [`observer`]: the attacker's sampled camera-like view and matched
//!   decoders.
//! - [`protocol`]: framing, CRC-8, BER accounting and capacity estimates.
//! - [`harness`]: scenario configs, Monte Carlo execution, sweeps, reports.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod bits;
pub mod detector;
pub mod error;
pub mod estimator;
pub mod exfil;
pub mod harness;
pub mod linalg;
pub mod observer;
pub mod plant;
pub mod protocol;
pub mod rng;

pub use bits::{BitString, Symbol, SymbolString};
pub use error::{Error, Result};
pub use estimator::{GaussianBelief, Innovation};
pub use exfil::{PerturbationSchedule, Scheme, StealthBudget};
pub use harness::{ScenarioConfig, ScenarioResult, Trace};
pub use observer::{ObservationSequence, ObserverParams};
pub use plant::{ArmGeometry, DroneParams, LinearSystemModel, PlantState};
