use serde::{Deserialize, Serialize};

use crate::error::{ProjectionError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pca,
    Tsne,
    Umap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Pca,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub method: Method,
    /// `None` picks `min(30, 0.99 · (n − 1) / 3)`
    pub perplexity: Option<f64>,
    pub n_iter: usize,
    pub learning_rate: f64,
    pub init: Init,
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub n_epochs: usize,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            method: Method::Tsne,
            perplexity: None,
            n_iter: 1000,
            learning_rate: 200.0,
            init: Init::Pca,
            n_neighbors: 15,
            min_dist: 0.1,
            n_epochs: 200,
            seed: 0,
        }
    }
}

impl ProjectionConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ProjectionError::InvalidConfig(m));
        match self.method {
            Method::Pca => Ok(()),
            Method::Tsne => {
                if let Some(p) = self.perplexity {
                    if !(p > 0.0 && p.is_finite()) {
                        return bad(format!("perplexity must be positive, got {p}"));
                    }
                }
                if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
                    return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
                }
                Ok(())
            }
            Method::Umap => {
                if self.n_neighbors < 2 {
                    return bad(format!("n_neighbors must be at least 2, got {}", self.n_neighbors));
                }
                if !(self.min_dist >= 0.0 && self.min_dist < 3.0) {
                    return bad(format!("min_dist must lie in [0, 3), got {}", self.min_dist));
                }
                if self.n_epochs == 0 {
                    return bad("n_epochs must be positive".into());
                }
                Ok(())
            }
        }
    }
}
