//! Monte Carlo experiments, result files and plots for `shiftreg`.

pub mod checks;
pub mod config;
pub mod experiment;
pub mod output;
pub mod summary;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{ExperimentConfig, Scenario, OUTPUT_DIR_ENV};
pub use experiment::{cell_seed, run_cell, run_experiment, ErrorRecord};
pub use summary::{summarize, CellSummary, Stats};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cell (n={n}, J={j}, rep={rep}) failed: {message}")]
    Cell { n: usize, j: usize, rep: usize, message: String },
    #[error("cannot summarize an empty set of records")]
    EmptyGroup,
    #[error("unknown metric `{0}` (expected shift or pattern)")]
    UnknownMetric(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}
