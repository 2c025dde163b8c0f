use std::collections::BTreeMap;
use std::fmt;

use latscape_analysis::ClusterParams;
use latscape_encoders::{EncoderConfig, TrainReport};
use latscape_projection::ProjectionConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_JSON: &str = "manifest.json";
pub const TRAIN_REPORT_JSON: &str = "train_report.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";

pub const STAGE_LOAD: &str = "load";
pub const STAGE_TRAIN: &str = "train";
pub const STAGE_EXTRACT: &str = "extract";
pub const STAGE_PROJECTION: &str = "projection";
pub const STAGE_CLUSTERING: &str = "clustering";
pub const STAGE_VALIDATION: &str = "validation";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pending,
    Complete,
    Failed,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Pending => "pending",
            RunStatus::Complete => "complete",
            RunStatus::Failed => "failed",
        })
    }
}

/// What to run: a registered dataset and the three stage configurations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub dataset: String,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub projection: ProjectionConfig,
    #[serde(default)]
    pub cluster: ClusterParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_completed: usize,
    pub first_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub final_kl: Option<f64>,
    pub min_batch_kl: Option<f64>,
    pub wall_time_s: f64,
}

impl From<&TrainReport> for TrainSummary {
    fn from(r: &TrainReport) -> Self {
        Self {
            epochs_completed: r.epochs_completed,
            first_loss: r.epoch_loss.first().copied(),
            final_loss: r.epoch_loss.last().copied(),
            final_kl: r.epoch_kl.last().copied(),
            min_batch_kl: r.min_batch_kl,
            wall_time_s: r.wall_time_s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub dataset: String,
    pub dataset_fingerprint: String,
    pub encoder: EncoderConfig,
    pub projection: ProjectionConfig,
    pub cluster: ClusterParams,
    /// artifact name → path relative to the run directory
    pub artifacts: BTreeMap<String, String>,
    pub train: Option<TrainSummary>,
    /// unix seconds
    pub created_at: u64,
    pub status: RunStatus,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Content hash of the dataset fingerprint and all three configurations.
pub fn run_id(fingerprint: &str, encoder: &EncoderConfig, projection: &ProjectionConfig, cluster: &ClusterParams) -> String {
    let key = serde_json::json!({
        "dataset_fingerprint": fingerprint,
        "encoder": encoder,
        "projection": projection,
        "cluster": cluster,
    });
    let bytes = serde_json::to_vec(&key).expect("configs serialize");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

impl RunManifest {
    pub fn pending(spec: &RunSpec, fingerprint: &str, created_at: u64) -> Self {
        Self {
            run_id: run_id(fingerprint, &spec.encoder, &spec.projection, &spec.cluster),
            dataset: spec.dataset.clone(),
            dataset_fingerprint: fingerprint.to_string(),
            encoder: spec.encoder.clone(),
            projection: spec.projection.clone(),
            cluster: spec.cluster.clone(),
            artifacts: BTreeMap::new(),
            train: None,
            created_at,
            status: RunStatus::Pending,
            failed_stage: None,
            error: None,
            warnings: Vec::new(),
        }
    }

    /// Recomputes the id from the stored fingerprint and configs.
    pub fn compute_id(&self) -> String {
        run_id(&self.dataset_fingerprint, &self.encoder, &self.projection, &self.cluster)
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }

    pub fn has_artifact(&self, name: &str) -> bool {
        self.artifacts.contains_key(name)
    }

    pub fn configs_json(&self) -> serde_json::Value {
        serde_json::json!({
            "run_id": self.run_id,
            "encoder": self.encoder,
            "projection": self.projection,
            "cluster": self.cluster,
        })
    }
}
