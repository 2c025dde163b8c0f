use std::collections::BTreeMap;

use latscape_ingest::SegmentSet;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const REGISTRY_JSON: &str = "datasets.json";

/// One registered segment archive. Paths are relative to the store root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub archive_dir: String,
    pub taxonomy_path: String,
    pub fingerprint: String,
    pub n_segments: usize,
    pub channels: usize,
    pub seg_len: usize,
    pub sample_rate_hz: f64,
    pub codes: Vec<String>,
}

impl DatasetEntry {
    pub(crate) fn describe(name: &str, set: &SegmentSet, fingerprint: String) -> Self {
        Self {
            name: name.to_string(),
            archive_dir: format!("datasets/{name}"),
            taxonomy_path: format!("datasets/{name}/taxonomy.tsv"),
            fingerprint,
            n_segments: set.len(),
            channels: set.channels(),
            seg_len: set.seg_len,
            sample_rate_hz: set.sample_rate_hz,
            codes: set.codes.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetRegistry {
    pub datasets: BTreeMap<String, DatasetEntry>,
}

impl DatasetRegistry {
    pub fn get(&self, name: &str) -> Result<&DatasetEntry> {
        self.datasets
            .get(name)
            .ok_or_else(|| ServiceError::DatasetNotFound(name.to_string()))
    }
}

/// Dataset names and run ids double as directory names.
pub fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && !name.starts_with('.')
        && name.len() <= 128
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ServiceError::InvalidRequest(format!("invalid name `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names() {
        for good in ["synth", "gesl-2021", "a.b_c"] {
            assert!(check_name(good).is_ok(), "{good}");
        }
        for bad in ["", ".hidden", "a/b", "..", "x y"] {
            assert!(check_name(bad).is_err(), "{bad}");
        }
    }
}
