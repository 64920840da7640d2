//! Experiment harness for the active-search toolkit.
//!
//! Generates instances, runs policies over seeded replications, aggregates
//! the results into tables and statistics, and backs the `asearch` CLI.

pub mod baseline;
pub mod config;
pub mod experiment;
pub mod instance;
pub mod output;
pub mod stats;
pub mod tables;

use thiserror::Error;

/// Harness-level failure, split by CLI exit code: configuration problems
/// exit with 2, data problems (unreadable or inconsistent inputs) with 3.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) => 3,
        }
    }

    pub fn config(msg: impl std::fmt::Display) -> Self {
        HarnessError::Config(msg.to_string())
    }

    pub fn data(msg: impl std::fmt::Display) -> Self {
        HarnessError::Data(msg.to_string())
    }
}
