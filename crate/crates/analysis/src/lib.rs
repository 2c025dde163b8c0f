//! Clustering, internal validation, cross-model agreement and
//! correspondence for 2-D latent maps.

pub mod agreement;
pub mod cluster;
pub mod cooccurrence;
pub mod correspondence;
pub mod error;
pub mod metrics;

use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

pub use agreement::{align_by_id, cluster_agreement, AgreementReport, LabeledMap, DEFAULT_K};
pub use cluster::{
    ahc, cluster, dbscan, gmm, k_distances, knee_eps, ClusterAssignment, ClusterMethod, ClusterParams, Linkage,
    Point, NOISE,
};
pub use cooccurrence::{label_cooccurrence, Cooccurrence};
pub use correspondence::{correspondence, procrustes, Alignment, CorrespondenceReport, DisplacementSummary, Similarity};
pub use error::{AnalysisError, Result};
pub use metrics::{calinski_harabasz, davies_bouldin, internal_validation, silhouette, ValidationReport};

pub const CLUSTERS_JSON: &str = "clusters.json";
pub const VALIDATION_JSON: &str = "validation.json";
pub const AGREEMENT_JSON: &str = "agreement.json";
pub const CORRESPONDENCE_JSON: &str = "correspondence.json";
pub const COOCCURRENCE_JSON: &str = "cooccurrence.json";

/// Writes `value` as pretty JSON to `dir/name`.
pub fn write_report<T: Serialize>(dir: &Path, name: &str, value: &T) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    std::fs::write(dir.join(name), text)
}

pub fn read_report<T: DeserializeOwned>(dir: &Path, name: &str) -> std::io::Result<T> {
    let text = std::fs::read_to_string(dir.join(name))?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}
