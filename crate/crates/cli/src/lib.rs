//! Experiment runner behind the `antiplane` binary: configuration parsing,
//! the subcommands and their CSV/SVG outputs.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Command, Outcome, RunError};
pub use config::{parse_config, parse_str, ConfigError, ExperimentConfig};
