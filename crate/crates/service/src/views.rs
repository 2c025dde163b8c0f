//! Read-side payloads served by the API.

use std::collections::HashMap;

use latscape_analysis::{
    cluster, label_cooccurrence, ClusterMethod, ClusterParams, Cooccurrence, ValidationReport, NOISE,
};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::manifest::{RunManifest, TrainSummary};
use crate::registry::DatasetEntry;
use crate::store::Store;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub cluster: i64,
    pub labels: Vec<String>,
    pub duration_s: f64,
    pub padded_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapPayload {
    pub run_id: String,
    pub method: ClusterMethod,
    pub n_clusters: usize,
    pub points: Vec<MapPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentVector {
    pub id: String,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentsPayload {
    pub run_id: String,
    pub dim: usize,
    pub vectors: Vec<LatentVector>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsPayload {
    pub run_id: String,
    pub validation: Option<ValidationReport>,
    pub n_clusters: usize,
    pub n_noise: usize,
    pub eps_used: Option<f64>,
    pub train: Option<TrainSummary>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub code: String,
    pub name: String,
    pub parent_code: Option<String>,
    pub depth: usize,
    /// index of the top-level ancestor among the roots
    pub category: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreePayload {
    pub dataset: String,
    pub nodes: Vec<TreeNode>,
    pub cooccurrence: Cooccurrence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub fingerprint: String,
    pub n_segments: usize,
    pub channels: usize,
    pub seg_len: usize,
    pub sample_rate_hz: f64,
    pub codes: Vec<String>,
}

impl From<&DatasetEntry> for DatasetSummary {
    fn from(e: &DatasetEntry) -> Self {
        Self {
            name: e.name.clone(),
            fingerprint: e.fingerprint.clone(),
            n_segments: e.n_segments,
            channels: e.channels,
            seg_len: e.seg_len,
            sample_rate_hz: e.sample_rate_hz,
            codes: e.codes.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub dataset: String,
    pub status: crate::manifest::RunStatus,
    pub encoder: latscape_encoders::EncoderKind,
    pub latent_dim: usize,
    pub projection: latscape_projection::Method,
    pub cluster: ClusterMethod,
    pub created_at: u64,
}

impl From<&RunManifest> for RunSummary {
    fn from(m: &RunManifest) -> Self {
        Self {
            run_id: m.run_id.clone(),
            dataset: m.dataset.clone(),
            status: m.status,
            encoder: m.encoder.kind,
            latent_dim: m.encoder.latent_dim,
            projection: m.projection.method,
            cluster: m.cluster.method,
            created_at: m.created_at,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl Store {
    /// Points of a complete run, colored by its stored clustering or by a
    /// fresh `method` clustering of the same projection.
    pub fn map_payload(&self, run_id: &str, method: Option<ClusterMethod>, k: Option<usize>) -> Result<MapPayload> {
        let m = self.complete_run(run_id)?;
        let proj = self.projection(&m)?;
        let stored = self.clusters(&m)?;
        let params = ClusterParams {
            method: method.unwrap_or(stored.params.method),
            k: k.unwrap_or(stored.params.k),
            ..stored.params.clone()
        };
        let labels = if params == stored.params {
            stored.labels
        } else {
            cluster(proj.segment_ids.clone(), &proj.coords, &params)?.labels
        };
        let meta = self.segment_meta(&m.dataset)?;
        let by_id: HashMap<&str, _> = meta.segments.iter().map(|s| (s.segment_id.as_str(), s)).collect();
        let mut points = Vec::with_capacity(proj.segment_ids.len());
        for (i, id) in proj.segment_ids.iter().enumerate() {
            let s = by_id
                .get(id.as_str())
                .ok_or_else(|| ServiceError::InvalidRequest(format!("segment {id} missing from dataset")))?;
            points.push(MapPoint {
                id: id.clone(),
                x: proj.coords[i][0],
                y: proj.coords[i][1],
                cluster: labels[i],
                labels: s.labels.clone(),
                duration_s: s.event_duration_s,
                padded_fraction: s.padded_fraction,
            });
        }
        let mut distinct: Vec<i64> = labels.iter().copied().filter(|&l| l != NOISE).collect();
        distinct.sort_unstable();
        distinct.dedup();
        Ok(MapPayload {
            run_id: m.run_id,
            method: params.method,
            n_clusters: distinct.len(),
            points,
        })
    }

    /// Latent vectors of the requested ids, or of every segment when `ids`
    /// is `None`.
    pub fn latents_payload(&self, run_id: &str, ids: Option<&[String]>) -> Result<LatentsPayload> {
        let m = self.complete_run(run_id)?;
        let lat = self.latents(&m)?;
        let vectors = match ids {
            None => (0..lat.rows())
                .map(|i| LatentVector {
                    id: lat.segment_ids[i].clone(),
                    values: lat.row(i).to_vec(),
                })
                .collect(),
            Some(ids) => {
                let index: HashMap<&str, usize> =
                    lat.segment_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
                ids.iter()
                    .map(|id| {
                        let i = index
                            .get(id.as_str())
                            .ok_or_else(|| ServiceError::InvalidRequest(format!("unknown segment id `{id}`")))?;
                        Ok(LatentVector {
                            id: id.clone(),
                            values: lat.row(*i).to_vec(),
                        })
                    })
                    .collect::<Result<_>>()?
            }
        };
        Ok(LatentsPayload {
            run_id: m.run_id,
            dim: lat.dim,
            vectors,
        })
    }

    pub fn metrics_payload(&self, run_id: &str) -> Result<MetricsPayload> {
        let m = self.complete_run(run_id)?;
        let a = self.clusters(&m)?;
        Ok(MetricsPayload {
            validation: self.validation(&m)?,
            n_clusters: a.n_clusters(),
            n_noise: a.n_noise(),
            eps_used: a.eps_used,
            train: m.train.clone(),
            warnings: m.warnings.clone(),
            run_id: m.run_id,
        })
    }

    /// Taxonomy in depth-first order with label co-occurrence counts over
    /// the dataset's segments.
    pub fn tree_payload(&self, dataset: &str) -> Result<TreePayload> {
        let taxonomy = self.taxonomy(dataset)?;
        let meta = self.segment_meta(dataset)?;
        let codes: Vec<String> = taxonomy.codes().map(str::to_string).collect();
        let index: HashMap<&str, usize> = codes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let sets: Vec<Vec<u8>> = meta
            .segments
            .iter()
            .map(|s| {
                let mut bits = vec![0u8; codes.len()];
                for c in &s.labels {
                    if let Some(&i) = index.get(c.as_str()) {
                        bits[i] = 1;
                    }
                }
                bits
            })
            .collect();
        let cooccurrence = label_cooccurrence(&codes, &sets)?;
        let nodes = taxonomy
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| TreeNode {
                code: n.code.clone(),
                name: n.name.clone(),
                parent_code: n.parent_code.clone(),
                depth: taxonomy.depth_of(i),
                category: taxonomy.category_of(i),
            })
            .collect();
        Ok(TreePayload {
            dataset: dataset.to_string(),
            nodes,
            cooccurrence,
        })
    }

    /// Latent matrix as CSV text or as JSON.
    pub fn export(&self, run_id: &str, format: ExportFormat) -> Result<String> {
        let m = self.complete_run(run_id)?;
        let lat = self.latents(&m)?;
        Ok(match format {
            ExportFormat::Csv => lat.to_csv(),
            ExportFormat::Json => serde_json::to_string(&lat)?,
        })
    }
}
