//! Configuration, experiment orchestration and artifact serialization.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, parse_override, preset, validate_config, RunConfig, PRESETS};
pub use run::{run_experiment, RunManifest};
