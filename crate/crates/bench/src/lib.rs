//! Shared fixtures for the criterion benches.

use std::path::PathBuf;

use physexfil::ScenarioConfig;

/// Loads one of the shipped scenario configs.
pub fn config(name: &str) -> ScenarioConfig {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    ScenarioConfig::from_path(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}
