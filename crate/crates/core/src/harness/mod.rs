//! Experiment configuration, seeded runs, metrics files, cross-seed
//! aggregation, learning-curve plots and convergence-lab reports.

mod config;
mod convergence;
mod metrics;
mod plot;
mod run;

pub use config::{ExperimentConfig, RawConfig, SweepConfig, DEFAULT_SEEDS};
pub use convergence::{run_convergence, write_convergence_outputs, write_residual_csv, ConvergenceReport, ConvergenceSetup, RESIDUAL_CSV_HEADER};
pub use metrics::{aggregate_seeds, read_csv, write_csv, MetricsRow, SummaryStat, CSV_HEADER};
pub use plot::{band, emit_learning_curve, render_svg, trace_from_rows};
pub use run::{
    eval_csv_name, random_policy_returns, run_experiment, run_seed, run_sweep, train_csv_name, ExperimentSummary, SeedFailure,
    SeedOutcome, SeedResult, SweepRow, SUMMARY_FILE,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::agents::AgentError;
use crate::lab::LabError;
use crate::mdp::MdpError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error in '{field}': {message}")]
    Config { field: String, message: String },
    #[error("config file line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },
    #[error("CSV line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("{}: CSV line {line}: {message}", path.display())]
    CsvFile { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Empty(String),
    #[error("every seed failed: {}", .0.iter().map(|(s, e)| format!("seed {s}: {e}")).collect::<Vec<_>>().join("; "))]
    AllSeedsFailed(Vec<(u64, String)>),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Whether the error stems from invalid user input rather than a failure
    /// while running.
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config { .. } | HarnessError::ConfigSyntax { .. })
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            HarnessError::Csv { line, message } => HarnessError::CsvFile {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        }
    }
}
