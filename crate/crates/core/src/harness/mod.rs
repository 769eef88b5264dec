//! Scenario configuration, Monte Carlo execution, sweeps and reports.

mod config;
mod experiment;
mod run;
mod sim;
mod stats;
mod trace;

pub use config::{ArmConfig, AttackScheme, AttackerConfig, NoiseConfig, ObserverConfig, ScenarioConfig, ScenarioKind};
pub use experiment::{
    calibrate_noise, parse_axis_values, report, sweep, CalibrationResult, Report, ResultFile, SweepResult,
};
pub use run::{
    link_trial, plan_attack, run_scenario, run_scenario_with, run_trial, AttackPlan, RunOptions, ScenarioResult,
    TrialExample, TrialOutput,
};
pub use stats::{summarize, MetricSummary};
pub use trace::Trace;
