use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("dataset `{0}` is not registered")]
    DatasetNotFound(String),
    #[error("dataset `{0}` is already registered with different content")]
    DatasetConflict(String),
    #[error("run `{0}` not found")]
    RunNotFound(String),
    #[error("run `{id}` is {status}, not complete")]
    RunNotComplete { id: String, status: String },
    #[error("comparison `{0}` not found")]
    ComparisonNotFound(String),
    #[error("runs were made on different datasets ({a} vs {b})")]
    DatasetMismatch { a: String, b: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Ingest(#[from] latscape_ingest::IngestError),
    #[error(transparent)]
    Encoder(#[from] latscape_encoders::EncoderError),
    #[error(transparent)]
    Projection(#[from] latscape_projection::ProjectionError),
    #[error(transparent)]
    Analysis(#[from] latscape_analysis::AnalysisError),
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> ServiceError {
    let path = path.into();
    move |source| ServiceError::Io { path, source }
}
