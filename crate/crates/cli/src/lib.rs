//! Configuration-driven experiment harness for the `heatfk` toolkit.

pub mod config;
pub mod output;
pub mod run;

use std::path::Path;

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig};
pub use output::Verdict;
pub use run::{run, RunOptions, RunOutcome, Subcommand};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage} failed: {source}")]
    Module { stage: &'static str, source: heatfk::Error },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("serialization failed: {0}")]
    Serialize(String),
    #[error("cannot build the thread pool: {0}")]
    Pool(String),
}

impl RunError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io { path: path.display().to_string(), source }
    }

    /// Process exit code: 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}
