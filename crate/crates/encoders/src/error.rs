use std::path::PathBuf;

use latscape_autodiff::AutodiffError;
use latscape_ingest::IngestError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("model expects {expected} channels, data has {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("segment set is empty")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("negative KL divergence {value} at epoch {epoch}, batch {batch}")]
    NegativeKl { epoch: usize, batch: usize, value: f64 },
    #[error("non-finite values passed to {0}")]
    NonFiniteInput(&'static str),
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),
    #[error("invalid latent file: {0}")]
    InvalidLatents(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = EncoderError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> EncoderError {
    let path = path.into();
    move |source| EncoderError::Io { path, source }
}
