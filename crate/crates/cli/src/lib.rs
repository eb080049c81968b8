//! Experiment harness behind the `subrosa` binary: configuration, input
//! resolution, per-kind pipelines, reports and convergence studies.

pub mod app;
pub mod config;
pub mod error;
pub mod refine;
pub mod report;
pub mod run;

pub use config::{parse_config, ExperimentConfig, Kind};
pub use error::CliError;
