//! Experiment orchestration for `weylforge`.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{Experiment, ExperimentConfig};
pub use experiments::run;
pub use report::{write_all, ExperimentReport, Verdict};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config field '{field}': {message}")]
    ConfigInvalid { field: String, message: String },
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error(transparent)]
    Lib(#[from] weylforge::Error),
    #[error("report has no rows")]
    EmptyReport,
}

impl CliError {
    pub fn invalid(field: &str, message: String) -> Self {
        CliError::ConfigInvalid { field: field.to_string(), message }
    }
}
