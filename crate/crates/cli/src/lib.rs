//! Batch front-end for the sliced-ADC simulator.

pub mod commands;
pub mod config;
pub mod svg;
pub mod table;

pub use commands::{main_with_args, run, Cli, CliError};
pub use config::{ConfigError, Preset, ScenarioConfig};
