use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Model(#[from] swinseg_model::ModelError),

    #[error(transparent)]
    Tensor(#[from] swinseg_tensor::TensorError),

    #[error(transparent)]
    Metrics(#[from] swinseg_metrics::MetricsError),
}

impl AppError {
    /// Process exit code: 0 success, 2 configuration, 3 data, 4 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Data(_) | AppError::Io { .. } => 3,
            AppError::Divergence { .. } => 4,
            AppError::Model(swinseg_model::ModelError::Config(_)) => 2,
            _ => 1,
        }
    }
}

impl From<swinseg_datagen::DatagenError> for AppError {
    fn from(e: swinseg_datagen::DatagenError) -> Self {
        match e {
            swinseg_datagen::DatagenError::Config(msg) => AppError::Config(msg),
            other => AppError::Data(other.to_string()),
        }
    }
}

impl From<swinseg_model::CheckpointError> for AppError {
    fn from(e: swinseg_model::CheckpointError) -> Self {
        AppError::Data(format!("checkpoint: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, AppError>;

pub fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io { path: path.to_path_buf(), source }
}
