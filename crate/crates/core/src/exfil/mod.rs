//! Attacker-side encoders and stealth-constrained searches.

mod encode;
mod schedule;
mod search;
mod trajectory;

use serde::{Deserialize, Serialize};

use crate::detector::DetectorSpec;
use crate::error::{Error, Result};

pub use encode::{encode_scheme1, encode_scheme2};
pub use schedule::{Channel, PerturbationSchedule, ScheduleEntry, Scheme};
pub use search::{max_stealthy_rate, min_snr_amplitude, RateProbe, RateSearch, RateSearchOptions};
pub use trajectory::{encode_trajectory, trajectory_capacity, TrajectoryPlan};

/// What the attacker assumes about the defender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StealthBudget {
    pub detector: DetectorSpec,
    pub max_detection_prob: f64,
    /// Waypoint tolerance in metres.
    pub utility_epsilon: f64,
}

impl StealthBudget {
    pub fn new(detector: DetectorSpec, max_detection_prob: f64, utility_epsilon: f64) -> Result<Self> {
        let b = Self {
            detector,
            max_detection_prob,
            utility_epsilon,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_detection_prob > 0.0 && self.max_detection_prob < 1.0) {
            return Err(Error::config("budget.max_detection_prob", "must be in (0, 1)"));
        }
        if !(self.utility_epsilon > 0.0) {
            return Err(Error::config("budget.utility_epsilon", "must be > 0"));
        }
        self.detector.validate("budget.detector")
    }
}
