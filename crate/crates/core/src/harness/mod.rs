//! Error metrics, experiment presets and runs, and reporting.

pub mod checks;
pub mod config;
pub mod experiment;
pub mod metrics;

pub use config::{ExperimentConfig, Scale, SCHEMA_VERSION};
pub use experiment::{error_metrics, integration_error_probe, run_experiment, ErrorReport, RunOptions, Summary};
