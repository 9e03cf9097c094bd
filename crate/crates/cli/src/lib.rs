//! Experiment runner for `frontlab`: config parsing, the figure catalog and
//! the pipelines behind each run mode.

pub mod catalog;
pub mod config;
pub mod runner;

pub use config::{ConfigError, ConfigSet, ExperimentConfig, Overrides, RawConfig};
pub use runner::{run, run_set, Outcome, Report, RunError};
