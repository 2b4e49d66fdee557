//! Run orchestration shared by the command-line front end and tests.

mod commands;
pub mod config;
pub mod embedding_rf;
pub mod stats;
pub mod svg;
pub mod workspace;

pub use commands::{run, Command, RunOptions};
pub use config::RunConfig;
pub use embedding_rf::{
    check_report_leakage, compare_embedding_rf, embedding_cluster_columns, embedding_cluster_rows, EmbeddingRfConfig,
    EmbeddingRfReport, FoldComparison, Tally,
};
pub use workspace::{sha256_hex, InputHash, RunManifest, Workspace};

use std::path::PathBuf;

use crate::clustering::ClusteringError;
use crate::data::DataError;
use crate::explain::ExplainError;
use crate::gnn::GnnError;
use crate::spatial::SpatialError;
use crate::synth::SynthError;
use crate::tabular::TabularError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    /// 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) | PipelineError::Config(_) => 1,
            PipelineError::Data(_) | PipelineError::Io { .. } => 2,
            PipelineError::Numeric(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| PipelineError::Io { path, source }
    }
}

impl From<DataError> for PipelineError {
    fn from(e: DataError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<SpatialError> for PipelineError {
    fn from(e: SpatialError) -> Self {
        match e {
            SpatialError::TooFewObjects { .. } => PipelineError::Data(format!("TooFewObjects: {e}")),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<ClusteringError> for PipelineError {
    fn from(e: ClusteringError) -> Self {
        match e {
            ClusteringError::NoConvergence(_) => PipelineError::Numeric(e.to_string()),
            ClusteringError::BadParameter(_) => PipelineError::Config(e.to_string()),
            ClusteringError::AssignmentMismatch { .. } => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<TabularError> for PipelineError {
    fn from(e: TabularError) -> Self {
        match e {
            TabularError::TooManyFeaturesForExact(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<GnnError> for PipelineError {
    fn from(e: GnnError) -> Self {
        match e {
            GnnError::NonFiniteLoss => PipelineError::Numeric(e.to_string()),
            GnnError::BadConfig(_) | GnnError::BadK { .. } => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<ExplainError> for PipelineError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::NonFiniteLoss => PipelineError::Numeric(e.to_string()),
            ExplainError::BadConfig(_) => PipelineError::Config(e.to_string()),
            ExplainError::Gnn(g) => g.into(),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for PipelineError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::BadConfig(_) => PipelineError::Config(e.to_string()),
            SynthError::Io(_) => PipelineError::Data(e.to_string()),
        }
    }
}
