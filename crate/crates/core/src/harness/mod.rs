//! Experiment driver behind the `toposample` binary: configuration files,
//! Monte Carlo correctness studies, zero counts and profile dumps.

mod config;
mod experiment;

pub use config::parse_list;
pub use config::{ExperimentConfig, ModelSpec, RunSpec, ThresholdSpec};
pub use experiment::{
    compare_strategies, profile_dump, results_table, run_experiment, run_plans, run_trials, samples_for_probability,
    scaling_table, zero_count_experiment, ExperimentResult, TrialRecord, ZeroCountResult,
};

use thiserror::Error;

use crate::error::Error;

/// Version string written into JSON metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("{stage} failed: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: Error,
    },

    #[error("validation failed: {0}")]
    SoftAssertion(String),
}

impl HarnessError {
    /// Process exit code: 2 configuration, 3 numerical failure, 4 failed
    /// soft assertion, 1 for i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io { .. } => 1,
            HarnessError::Numerical { source, .. } => {
                if source.is_numerical() {
                    3
                } else {
                    2
                }
            }
            HarnessError::SoftAssertion(_) => 4,
        }
    }

    /// Wraps a core error with the name of the failing stage.
    pub fn at(stage: &'static str) -> impl FnOnce(Error) -> HarnessError {
        move |source| HarnessError::Numerical { stage, source }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;
