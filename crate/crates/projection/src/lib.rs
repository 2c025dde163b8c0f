//! Two-dimensional projections of latent matrices.

pub mod config;
pub mod error;
pub mod pca;
pub mod tsne;
pub mod umap;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{Init, Method, ProjectionConfig};
pub use error::{ProjectionError, Result};
pub use pca::{pca, PcaResult};
pub use tsne::{tsne, TsneResult};
pub use umap::umap;

pub const PROJ_JSON: &str = "proj.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    #[serde(rename = "ids")]
    pub segment_ids: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    pub config: ProjectionConfig,
    /// config hash of the latent matrix that was projected
    pub source_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explained_variance: Option<Vec<f64>>,
}

/// Projects `rows` with the configured method.
pub fn project(
    segment_ids: Vec<String>,
    rows: &[Vec<f64>],
    config: &ProjectionConfig,
    source_hash: &str,
) -> Result<Projection2D> {
    if segment_ids.len() != rows.len() {
        return Err(ProjectionError::InvalidInput);
    }
    config.validate()?;
    let (coords, kl_final, explained_variance) = match config.method {
        Method::Pca => {
            let r = pca(rows, 2)?;
            let coords = r.scores.iter().map(|s| [s[0], s[1]]).collect();
            (coords, None, Some(r.explained_variance_ratio))
        }
        Method::Tsne => {
            let r = tsne(rows, config)?;
            (r.coords, r.kl_trace.last().copied(), None)
        }
        Method::Umap => (umap(rows, config)?, None, None),
    };
    Ok(Projection2D {
        segment_ids,
        coords,
        config: config.clone(),
        source_hash: source_hash.to_string(),
        kl_final,
        explained_variance,
    })
}

impl Projection2D {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let p = dir.join(PROJ_JSON);
        fs::write(&p, serde_json::to_vec_pretty(self)?).map_err(|source| ProjectionError::Io { path: p, source })
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join(PROJ_JSON);
        let bytes = fs::read(&p).map_err(|source| ProjectionError::Io { path: p, source })?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
