use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("invalid projection config: {0}")]
    InvalidConfig(String),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("input has {dims} dimensions, fewer than the {out_dims} requested")]
    TooFewDims { dims: usize, out_dims: usize },
    #[error("perplexity {perplexity} too large for {n} points (must be below {limit})")]
    PerplexityTooLarge { perplexity: f64, n: usize, limit: f64 },
    #[error("degenerate input: all rows identical")]
    Degenerate,
    #[error("rows have inconsistent widths or non-finite values")]
    InvalidInput,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ProjectionError> = std::result::Result<T, E>;
