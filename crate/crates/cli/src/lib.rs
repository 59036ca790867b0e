//! Batch experiment runner for the `kacmix` toolkit.

pub mod config;
pub mod profile;
pub mod run;

pub use config::{parse_config, Command, ConfigError, ExperimentConfig, Overrides};
pub use run::{run, run_with_workers};
