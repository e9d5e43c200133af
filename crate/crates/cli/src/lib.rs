//! Config-driven experiment runner.

pub mod config;
pub mod runner;

pub use config::{parse_config, ConfigError, ExperimentConfig, ExperimentKind};
pub use runner::{run_experiment, RunOptions, RunReport, TestDriver};
