//! Configuration, presets and the batch runner behind the `duhamel` binary.

pub mod config;
pub mod presets;
pub mod run;

pub use config::{parse_config, parse_config_str, preset_config, Ball, ConfigError, DualConfig, RunConfig};
pub use run::{run, Command, Outcome, RunError};
