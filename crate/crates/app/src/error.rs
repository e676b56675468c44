use std::path::PathBuf;

use matra_core::corpus::CorpusError;
use matra_core::inference::InferenceError;
use matra_core::metrics::MetricsError;
use matra_core::training::{CheckpointError, TrainError};
use thiserror::Error;

/// Everything a subcommand can fail with. The variant decides the exit code:
/// 1 for usage and configuration problems, 2 for bad input data.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Corpus {
        path: PathBuf,
        #[source]
        source: CorpusError,
    },
    #[error("{path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: CheckpointError,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config { .. } | Self::Write { .. } => 1,
            Self::Train(TrainError::Config(_) | TrainError::Schedule(_) | TrainError::Model(_)) => 1,
            _ => 2,
        }
    }
}
