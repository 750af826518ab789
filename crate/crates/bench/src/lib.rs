//! Fixtures shared by the benchmarks.

use windvic::engine::ScenarioConfig;
use windvic::scenario::Scenario;
use windvic::ControllerKind;

pub const SINGLE: &str = include_str!("../../../scenarios/single_wtg.toml");
pub const MULTI: &str = include_str!("../../../scenarios/multi_wtg.toml");

/// Engine configuration for a bundled scenario with the given controller.
pub fn config(src: &str, kind: ControllerKind) -> ScenarioConfig {
    Scenario::from_toml_str(src)
        .and_then(|s| s.to_config_with(kind))
        .expect("bundled scenario is valid")
}
