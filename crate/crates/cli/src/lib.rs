//! Experiment driver: TOML configuration, subcommands and artifact writing.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{Command, Context};
pub use config::ExperimentConfig;
pub use error::CliError;
