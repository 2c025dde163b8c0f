use latscape_analysis::{
    cluster_agreement, correspondence, read_report, write_report, AgreementReport, Alignment, CorrespondenceReport,
    LabeledMap, AGREEMENT_JSON, CORRESPONDENCE_JSON, DEFAULT_K,
};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Result, ServiceError};
use crate::store::{publish, Store};

pub const CORRESPONDENCE_PROCRUSTES_JSON: &str = "correspondence_procrustes.json";

fn default_k() -> usize {
    DEFAULT_K
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRequest {
    pub run_a: String,
    pub run_b: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub alignment: Alignment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPayload {
    pub run_a: String,
    pub run_b: String,
    pub agreement: AgreementReport,
    pub correspondence: CorrespondenceReport,
}

fn correspondence_file(alignment: Alignment) -> &'static str {
    match alignment {
        Alignment::None => CORRESPONDENCE_JSON,
        Alignment::Procrustes => CORRESPONDENCE_PROCRUSTES_JSON,
    }
}

impl Store {
    /// Agreement and correspondence of two complete runs on the same
    /// dataset, persisted under `comparisons/<a>__<b>/`. Both alignments
    /// are stored when they can be computed.
    pub fn compare_runs(&self, a: &str, b: &str, k: usize, alignment: Alignment) -> Result<ComparisonPayload> {
        let ma = self.complete_run(a)?;
        let mb = self.complete_run(b)?;
        if ma.dataset_fingerprint != mb.dataset_fingerprint {
            return Err(ServiceError::DatasetMismatch {
                a: ma.dataset_fingerprint,
                b: mb.dataset_fingerprint,
            });
        }
        let (pa, pb) = (self.projection(&ma)?, self.projection(&mb)?);
        let (ca, cb) = (self.clusters(&ma)?, self.clusters(&mb)?);
        let side_a = LabeledMap {
            ids: &pa.segment_ids,
            points: &pa.coords,
            labels: &ca.labels,
        };
        let side_b = LabeledMap {
            ids: &pb.segment_ids,
            points: &pb.coords,
            labels: &cb.labels,
        };
        let mut agreement = cluster_agreement(&side_a, &side_b, k)?;
        agreement.config_a = ma.configs_json();
        agreement.config_b = mb.configs_json();
        let requested = correspondence(&pa.segment_ids, &pa.coords, &pb.segment_ids, &pb.coords, alignment)?;
        let other_alignment = match alignment {
            Alignment::None => Alignment::Procrustes,
            Alignment::Procrustes => Alignment::None,
        };
        let other = correspondence(&pa.segment_ids, &pa.coords, &pb.segment_ids, &pb.coords, other_alignment).ok();
        publish(&self.comparison_dir(a, b), |tmp| {
            let w = |name: &str, v: &CorrespondenceReport| write_report(tmp, name, v).map_err(io_err(tmp.join(name)));
            write_report(tmp, AGREEMENT_JSON, &agreement).map_err(io_err(tmp.join(AGREEMENT_JSON)))?;
            w(correspondence_file(alignment), &requested)?;
            if let Some(o) = &other {
                w(correspondence_file(other_alignment), o)?;
            }
            Ok(())
        })?;
        log::info!("compared {a} and {b}: {:.2}% agreement", agreement.mean_percent);
        Ok(ComparisonPayload {
            run_a: a.to_string(),
            run_b: b.to_string(),
            agreement,
            correspondence: requested,
        })
    }

    /// A comparison stored by [`Store::compare_runs`].
    pub fn comparison(&self, a: &str, b: &str, alignment: Alignment) -> Result<ComparisonPayload> {
        let name = format!("{a}__{b}");
        let dir = self.comparison_dir(a, b);
        let file = correspondence_file(alignment);
        if crate::registry::check_name(a).is_err()
            || crate::registry::check_name(b).is_err()
            || !dir.join(AGREEMENT_JSON).exists()
            || !dir.join(file).exists()
        {
            return Err(ServiceError::ComparisonNotFound(name));
        }
        Ok(ComparisonPayload {
            run_a: a.to_string(),
            run_b: b.to_string(),
            agreement: read_report(&dir, AGREEMENT_JSON).map_err(io_err(dir.join(AGREEMENT_JSON)))?,
            correspondence: read_report(&dir, file).map_err(io_err(dir.join(file)))?,
        })
    }
}
