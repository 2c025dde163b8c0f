//! Run stages. Each stage reads the artifacts of the previous one from the
//! run directory, publishes its own and updates the manifest.

use std::time::{SystemTime, UNIX_EPOCH};

use latscape_analysis::{
    cluster, internal_validation, read_report, write_report, AnalysisError, ClusterAssignment, ValidationReport,
    CLUSTERS_JSON, VALIDATION_JSON,
};
use latscape_encoders::latents::{LATENTS_BIN, LATENTS_META};
use latscape_encoders::{extract_latents, fit, save_checkpoint, LatentMatrix};
use latscape_projection::{project, Projection2D, PROJ_JSON};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Result, ServiceError};
use crate::manifest::{
    RunManifest, RunSpec, RunStatus, TrainSummary, CHECKPOINT_DIR, STAGE_CLUSTERING, STAGE_EXTRACT, STAGE_LOAD,
    STAGE_PROJECTION, STAGE_TRAIN, STAGE_VALIDATION, TRAIN_REPORT_JSON,
};
use crate::store::{publish, Store};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub cached: bool,
    pub manifest: RunManifest,
}

pub(crate) fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn stage_err(stage: &str, e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Stage {
        stage: stage.to_string(),
        message: e.to_string(),
    }
}

impl Store {
    /// Finds or creates the run record for `spec` without executing it.
    ///
    /// A complete run is returned as cached and a pending one as is; a
    /// failed run is cleared and reset to pending.
    pub fn prepare_run(&self, spec: &RunSpec) -> Result<RunOutcome> {
        let entry = self.dataset(&spec.dataset)?;
        let id = crate::manifest::run_id(&entry.fingerprint, &spec.encoder, &spec.projection, &spec.cluster);
        match self.read_manifest(&id) {
            Ok(m) if m.status == RunStatus::Complete => {
                return Ok(RunOutcome {
                    cached: true,
                    manifest: m,
                })
            }
            Ok(m) if m.status == RunStatus::Pending => {
                return Ok(RunOutcome {
                    cached: false,
                    manifest: m,
                })
            }
            Ok(_) => {
                let dir = self.run_dir(&id);
                std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
            }
            Err(ServiceError::RunNotFound(_)) => {}
            Err(e) => return Err(e),
        }
        let m = RunManifest::pending(spec, &entry.fingerprint, unix_now());
        self.write_manifest(&m)?;
        Ok(RunOutcome {
            cached: false,
            manifest: m,
        })
    }

    /// Executes train → extract → project → cluster → validate. A stage
    /// error is recorded in the manifest and the run is returned as failed.
    pub fn run_pipeline(&self, spec: &RunSpec) -> Result<RunOutcome> {
        let out = self.prepare_run(spec)?;
        if out.cached {
            log::info!("run {} cached", out.manifest.run_id);
            return Ok(out);
        }
        let manifest = self.execute_run(&out.manifest.run_id)?;
        Ok(RunOutcome {
            cached: false,
            manifest,
        })
    }

    /// Runs every stage still missing on a pending run.
    pub fn execute_run(&self, run_id: &str) -> Result<RunManifest> {
        let steps: [fn(&Store, &str) -> Result<RunManifest>; 4] =
            [Store::stage_train, Store::stage_project, Store::stage_cluster, Store::stage_validate];
        for step in steps {
            match step(self, run_id) {
                Ok(m) if m.is_complete() => return Ok(m),
                Ok(_) => {}
                Err(ServiceError::Stage { .. }) => return self.read_manifest(run_id),
                Err(e) => return Err(e),
            }
        }
        self.read_manifest(run_id)
    }

    fn pending_manifest(&self, run_id: &str) -> Result<RunManifest> {
        let m = self.read_manifest(run_id)?;
        match m.status {
            RunStatus::Pending => Ok(m),
            RunStatus::Complete => Err(ServiceError::InvalidRequest(format!(
                "run {run_id} is complete and immutable"
            ))),
            RunStatus::Failed => Err(ServiceError::InvalidRequest(format!(
                "run {run_id} failed in stage {}; resubmit it",
                m.failed_stage.as_deref().unwrap_or("?")
            ))),
        }
    }

    fn fail(&self, mut m: RunManifest, stage: &str, e: impl std::fmt::Display) -> ServiceError {
        log::warn!("run {} failed in {stage}: {e}", m.run_id);
        m.status = RunStatus::Failed;
        m.failed_stage = Some(stage.to_string());
        m.error = Some(e.to_string());
        if let Err(w) = self.write_manifest(&m) {
            log::error!("could not record failure of {}: {w}", m.run_id);
        }
        stage_err(stage, e)
    }

    fn require(&self, m: &RunManifest, artifact: &str, stage: &str) -> Result<()> {
        if m.has_artifact(artifact) {
            Ok(())
        } else {
            Err(ServiceError::InvalidRequest(format!(
                "run {} has no {artifact}; the {stage} stage needs it",
                m.run_id
            )))
        }
    }

    /// Trains the encoder and extracts latents.
    pub fn stage_train(&self, run_id: &str) -> Result<RunManifest> {
        let mut m = self.pending_manifest(run_id)?;
        if m.has_artifact(LATENTS_BIN) {
            return Ok(m);
        }
        let set = match self.load_segments(&m.dataset) {
            Ok((entry, _)) if entry.fingerprint != m.dataset_fingerprint => {
                let msg = format!("dataset `{}` no longer matches the run's fingerprint", m.dataset);
                return Err(self.fail(m, STAGE_LOAD, msg));
            }
            Ok((_, set)) => set,
            Err(e) => return Err(self.fail(m, STAGE_LOAD, e)),
        };
        log::info!("run {run_id}: training {} (D = {})", m.encoder.kind, m.encoder.latent_dim);
        let (model, report) = match fit(&m.encoder, &set) {
            Ok(r) => r,
            Err(e) => return Err(self.fail(m, STAGE_TRAIN, e)),
        };
        let latents = match extract_latents(&model, &set) {
            Ok(l) => l,
            Err(e) => return Err(self.fail(m, STAGE_EXTRACT, e)),
        };
        let written = publish(&self.run_dir(run_id), |tmp| {
            save_checkpoint(&model, &tmp.join(CHECKPOINT_DIR))?;
            latents.write(tmp)?;
            let p = tmp.join(TRAIN_REPORT_JSON);
            std::fs::write(&p, serde_json::to_vec_pretty(&report)?).map_err(io_err(&p))
        });
        if let Err(e) = written {
            return Err(self.fail(m, STAGE_EXTRACT, e));
        }
        for name in [CHECKPOINT_DIR, LATENTS_BIN, LATENTS_META, TRAIN_REPORT_JSON] {
            m.artifacts.insert(name.to_string(), name.to_string());
        }
        m.train = Some(TrainSummary::from(&report));
        self.write_manifest(&m)?;
        Ok(m)
    }

    pub fn stage_project(&self, run_id: &str) -> Result<RunManifest> {
        let mut m = self.pending_manifest(run_id)?;
        if m.has_artifact(PROJ_JSON) {
            return Ok(m);
        }
        self.require(&m, LATENTS_BIN, STAGE_PROJECTION)?;
        let dir = self.run_dir(run_id);
        let result = LatentMatrix::read(&dir)
            .map_err(ServiceError::from)
            .and_then(|lat| {
                Ok(project(
                    lat.segment_ids.clone(),
                    &lat.to_rows_f64(),
                    &m.projection,
                    &lat.config_hash,
                )?)
            });
        let proj = match result {
            Ok(p) => p,
            Err(e) => return Err(self.fail(m, STAGE_PROJECTION, e)),
        };
        if let Err(e) = publish(&dir, |tmp| Ok(proj.write(tmp)?)) {
            return Err(self.fail(m, STAGE_PROJECTION, e));
        }
        m.artifacts.insert(PROJ_JSON.into(), PROJ_JSON.into());
        self.write_manifest(&m)?;
        Ok(m)
    }

    pub fn stage_cluster(&self, run_id: &str) -> Result<RunManifest> {
        let mut m = self.pending_manifest(run_id)?;
        if m.has_artifact(CLUSTERS_JSON) {
            return Ok(m);
        }
        self.require(&m, PROJ_JSON, STAGE_CLUSTERING)?;
        let dir = self.run_dir(run_id);
        let result = Projection2D::read(&dir)
            .map_err(ServiceError::from)
            .and_then(|p| Ok(cluster(p.segment_ids, &p.coords, &m.cluster)?));
        let assignment = match result {
            Ok(a) => a,
            Err(e) => return Err(self.fail(m, STAGE_CLUSTERING, e)),
        };
        if let Err(e) = publish(&dir, |tmp| write_report(tmp, CLUSTERS_JSON, &assignment).map_err(io_err(tmp))) {
            return Err(self.fail(m, STAGE_CLUSTERING, e));
        }
        m.artifacts.insert(CLUSTERS_JSON.into(), CLUSTERS_JSON.into());
        self.write_manifest(&m)?;
        Ok(m)
    }

    /// Internal validation; marks the run complete. Fewer than two
    /// clusters leaves the run without a validation report and adds a
    /// warning.
    pub fn stage_validate(&self, run_id: &str) -> Result<RunManifest> {
        let mut m = self.pending_manifest(run_id)?;
        self.require(&m, CLUSTERS_JSON, STAGE_VALIDATION)?;
        let dir = self.run_dir(run_id);
        let result = Projection2D::read(&dir).map_err(ServiceError::from).and_then(|p| {
            let a: ClusterAssignment = read_report(&dir, CLUSTERS_JSON).map_err(io_err(dir.join(CLUSTERS_JSON)))?;
            Ok(internal_validation(&p.coords, &a.labels))
        });
        match result {
            Ok(Ok(report)) => {
                if let Err(e) = publish(&dir, |tmp| write_report(tmp, VALIDATION_JSON, &report).map_err(io_err(tmp))) {
                    return Err(self.fail(m, STAGE_VALIDATION, e));
                }
                m.artifacts.insert(VALIDATION_JSON.into(), VALIDATION_JSON.into());
            }
            Ok(Err(e @ AnalysisError::TooFewClusters(_))) => m.warnings.push(format!("validation skipped: {e}")),
            Ok(Err(e)) => return Err(self.fail(m, STAGE_VALIDATION, e)),
            Err(e) => return Err(self.fail(m, STAGE_VALIDATION, e)),
        }
        m.status = RunStatus::Complete;
        self.write_manifest(&m)?;
        log::info!("run {run_id} complete");
        Ok(m)
    }

    /// Validation report of a complete run, if one was produced.
    pub fn validation(&self, m: &RunManifest) -> Result<Option<ValidationReport>> {
        if !m.has_artifact(VALIDATION_JSON) {
            return Ok(None);
        }
        let dir = self.run_dir(&m.run_id);
        Ok(Some(read_report(&dir, VALIDATION_JSON).map_err(io_err(dir.join(VALIDATION_JSON)))?))
    }

    pub fn latents(&self, m: &RunManifest) -> Result<LatentMatrix> {
        Ok(LatentMatrix::read(&self.run_dir(&m.run_id))?)
    }

    pub fn projection(&self, m: &RunManifest) -> Result<Projection2D> {
        Ok(Projection2D::read(&self.run_dir(&m.run_id))?)
    }

    pub fn clusters(&self, m: &RunManifest) -> Result<ClusterAssignment> {
        let dir = self.run_dir(&m.run_id);
        read_report(&dir, CLUSTERS_JSON).map_err(io_err(dir.join(CLUSTERS_JSON)))
    }
}
