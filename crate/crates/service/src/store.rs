//! On-disk layout under the store root:
//!
//! ```text
//! datasets.json
//! datasets/<name>/            segment archive + taxonomy.tsv
//! runs/<run_id>/              manifest.json and run artifacts
//! comparisons/<a>__<b>/       agreement and correspondence reports
//! bench/<bench_id>/           benchmark tables
//! ```
//!
//! Every file is published by writing a temporary sibling and renaming it.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use latscape_ingest::archive::{ArchiveMeta, SEGMENTS_META};
use latscape_ingest::{archive_fingerprint, read_archive, write_archive, LabelTaxonomy, SegmentSet};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{io_err, Result, ServiceError};
use crate::manifest::{RunManifest, MANIFEST_JSON};
use crate::registry::{check_name, DatasetEntry, DatasetRegistry, REGISTRY_JSON};

pub const TAXONOMY_TSV: &str = "taxonomy.tsv";

static SCRATCH: AtomicU64 = AtomicU64::new(0);

fn scratch_name(stem: &str) -> String {
    format!(".{stem}.tmp-{}-{}", std::process::id(), SCRATCH.fetch_add(1, Ordering::Relaxed))
}

/// Writes `bytes` to `path` through a renamed temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .ok_or_else(|| ServiceError::InvalidRequest(format!("no parent directory for {}", path.display())))?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let stem = path.file_name().and_then(|s| s.to_str()).unwrap_or("file");
    let tmp = dir.join(scratch_name(stem));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(path)(e)
    })
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &serde_json::to_vec_pretty(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Lets `write` fill a scratch directory inside `dir`, then renames each
/// entry it produced into `dir`, replacing entries of the same name.
pub fn publish<F>(dir: &Path, write: F) -> Result<Vec<String>>
where
    F: FnOnce(&Path) -> Result<()>,
{
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let scratch = dir.join(scratch_name("publish"));
    fs::create_dir(&scratch).map_err(io_err(&scratch))?;
    let result = write(&scratch).and_then(|()| {
        let mut names = Vec::new();
        let entries = fs::read_dir(&scratch).map_err(io_err(&scratch))?;
        for e in entries {
            let e = e.map_err(io_err(&scratch))?;
            let name = e.file_name().to_string_lossy().into_owned();
            let target = dir.join(&name);
            if target.is_dir() {
                fs::remove_dir_all(&target).map_err(io_err(&target))?;
            }
            fs::rename(e.path(), &target).map_err(io_err(&target))?;
            names.push(name);
        }
        names.sort();
        Ok(names)
    });
    let _ = fs::remove_dir_all(&scratch);
    result
}

/// Artifact store rooted at one directory.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    registry: RwLock<DatasetRegistry>,
}

impl Store {
    /// Opens `root`, creating it if needed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["datasets", "runs", "comparisons", "bench"] {
            let d = root.join(sub);
            fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        let reg_path = root.join(REGISTRY_JSON);
        let registry = if reg_path.exists() {
            read_json(&reg_path)?
        } else {
            DatasetRegistry::default()
        };
        Ok(Self {
            root,
            registry: RwLock::new(registry),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(run_id)
    }

    pub fn comparison_dir(&self, a: &str, b: &str) -> PathBuf {
        self.root.join("comparisons").join(format!("{a}__{b}"))
    }

    pub fn bench_dir(&self, bench_id: &str) -> PathBuf {
        self.root.join("bench").join(bench_id)
    }

    pub fn datasets(&self) -> Vec<DatasetEntry> {
        self.registry.read().unwrap().datasets.values().cloned().collect()
    }

    pub fn dataset(&self, name: &str) -> Result<DatasetEntry> {
        self.registry.read().unwrap().get(name).cloned()
    }

    /// Archives `set` under `name`. Registering identical content again is
    /// a no-op; different content under a taken name is refused.
    pub fn register_dataset(&self, name: &str, set: &SegmentSet, taxonomy: &LabelTaxonomy) -> Result<DatasetEntry> {
        check_name(name)?;
        let mut reg = self.registry.write().unwrap();
        let fp = latscape_ingest::fingerprint(set)?;
        if let Some(existing) = reg.datasets.get(name) {
            if existing.fingerprint == fp {
                return Ok(existing.clone());
            }
            return Err(ServiceError::DatasetConflict(name.to_string()));
        }
        let entry = DatasetEntry::describe(name, set, fp);
        publish(&self.root.join(&entry.archive_dir), |tmp| {
            write_archive(set, tmp)?;
            fs::write(tmp.join(TAXONOMY_TSV), taxonomy.render()).map_err(io_err(tmp.join(TAXONOMY_TSV)))
        })?;
        let mut next = reg.clone();
        next.datasets.insert(name.to_string(), entry.clone());
        write_json_atomic(&self.root.join(REGISTRY_JSON), &next)?;
        *reg = next;
        log::info!("registered dataset {name} ({} segments)", entry.n_segments);
        Ok(entry)
    }

    /// Reads a registered archive and checks it against its fingerprint.
    pub fn load_segments(&self, name: &str) -> Result<(DatasetEntry, SegmentSet)> {
        let entry = self.dataset(name)?;
        let dir = self.root.join(&entry.archive_dir);
        let fp = archive_fingerprint(&dir)?;
        if fp != entry.fingerprint {
            return Err(ServiceError::Stage {
                stage: "load".into(),
                message: format!("archive of `{name}` changed on disk (fingerprint {fp})"),
            });
        }
        let set = read_archive(&dir)?;
        Ok((entry, set))
    }

    /// Segment metadata without the sample values.
    pub fn segment_meta(&self, name: &str) -> Result<ArchiveMeta> {
        let entry = self.dataset(name)?;
        read_json(&self.root.join(&entry.archive_dir).join(SEGMENTS_META))
    }

    pub fn taxonomy(&self, name: &str) -> Result<LabelTaxonomy> {
        let entry = self.dataset(name)?;
        let p = self.root.join(&entry.taxonomy_path);
        Ok(LabelTaxonomy::parse(&fs::read_to_string(&p).map_err(io_err(&p))?)?)
    }

    pub fn read_manifest(&self, run_id: &str) -> Result<RunManifest> {
        if check_name(run_id).is_err() {
            return Err(ServiceError::RunNotFound(run_id.to_string()));
        }
        let p = self.run_dir(run_id).join(MANIFEST_JSON);
        if !p.exists() {
            return Err(ServiceError::RunNotFound(run_id.to_string()));
        }
        read_json(&p)
    }

    pub fn write_manifest(&self, m: &RunManifest) -> Result<()> {
        write_json_atomic(&self.run_dir(&m.run_id).join(MANIFEST_JSON), m)
    }

    /// Manifests of every run, oldest first.
    pub fn list_runs(&self) -> Result<Vec<RunManifest>> {
        let dir = self.root.join("runs");
        let mut out = Vec::new();
        for e in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let e = e.map_err(io_err(&dir))?;
            let name = e.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') || !e.path().join(MANIFEST_JSON).exists() {
                continue;
            }
            out.push(self.read_manifest(&name)?);
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.run_id.cmp(&b.run_id)));
        Ok(out)
    }

    /// Complete manifest of `run_id`.
    pub fn complete_run(&self, run_id: &str) -> Result<RunManifest> {
        let m = self.read_manifest(run_id)?;
        if !m.is_complete() {
            return Err(ServiceError::RunNotComplete {
                id: run_id.to_string(),
                status: m.status.to_string(),
            });
        }
        Ok(m)
    }
}
