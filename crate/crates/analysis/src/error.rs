use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid cluster parameters: {0}")]
    InvalidParams(String),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("need at least 2 clusters excluding noise, found {0}")]
    TooFewClusters(usize),
    #[error("id sets differ: {0}")]
    IdMismatch(String),
    #[error("k = {k} must be positive and below the point count {n}")]
    InvalidK { k: usize, n: usize },
    #[error("non-finite coordinates")]
    NonFinite,
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;
