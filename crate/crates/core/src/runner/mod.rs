//! Experiment matrix planning, resumable execution and run-level reports.

mod config;
mod exec;
mod matrix;
mod report;

pub use config::{
    AnalysisSection, DatasetConfig, EndpointConfig, MatrixAxes, PromptSection, ReasoningSection, RunConfig, RunSection,
};
pub use exec::{
    http_factory, mock_factory, prepare_dataset, run_campaign, run_experiment, select_cells, BackendFactory,
    CellReport, CellSummary, ExecOptions, PreparedDataset,
};
pub use matrix::{enumerate_matrix, CellStatus, ExperimentConfig, ManifestEntry, RunManifest};
pub use report::{analyze_cells, build_report, read_cells_table, AnalysisOutputs, ReportSummary, MetricsRow};

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::dataset::DatasetError;
use crate::gateway::StoreError;
use crate::metrics::MetricsError;
use crate::prompt::PromptError;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot encode output: {0}")]
    Json(#[from] serde_json::Error),
    #[error("table error: {0}")]
    Csv(#[from] csv::Error),
}
