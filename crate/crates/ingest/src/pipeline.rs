//! Dataset directory to SegmentSet.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, IngestError, Result};
use crate::labels::{parse_label_tags, LabelSet, LabelTaxonomy};
use crate::record::{parse_event_file, ChannelSchema, RawRecord};
use crate::segment::{normalize_segments, segment_and_pad, NormStats, SegmentSet, StatsSource};
use crate::signal::{cycle_len_samples, detect_event_regions, resample_record, EventRegion};
use crate::synth::{LABELS_FILE, RECORDS_DIR, TAXONOMY_FILE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// common rate; `None` keeps the rate of the first record
    pub target_rate_hz: Option<f64>,
    pub line_freq_hz: f64,
    pub threshold_k: f64,
    pub segment_s: f64,
    pub stats_source: StatsSource,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_rate_hz: None,
            line_freq_hz: 60.0,
            threshold_k: 5.0,
            segment_s: 1.0,
            stats_source: StatsSource::NonEventBaseline,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.target_rate_hz.is_none_or(|r| r > 0.0)
            && self.line_freq_hz > 0.0
            && self.threshold_k >= 0.0
            && self.segment_s > 0.0;
        if ok {
            Ok(())
        } else {
            Err(IngestError::InvalidParameter(format!("{self:?}")))
        }
    }
}

/// Per-record diagnostics from preprocessing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordReport {
    pub record_id: String,
    pub regions: Vec<EventRegion>,
    pub threshold: f64,
    pub n_segments: usize,
    pub unknown_codes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub set: SegmentSet,
    pub reports: Vec<RecordReport>,
}

/// Resamples, flags events, segments, pads, normalizes and labels.
///
/// Records are processed in the given order; segment ids follow it.
pub fn preprocess_records(
    records: &[RawRecord],
    taxonomy: &LabelTaxonomy,
    cfg: &PreprocessConfig,
) -> Result<Preprocessed> {
    cfg.validate()?;
    let first = records
        .first()
        .ok_or_else(|| IngestError::InvalidParameter("no records".into()))?;
    let rate = cfg.target_rate_hz.unwrap_or(first.sample_rate_hz);
    let cycle = cycle_len_samples(rate, cfg.line_freq_hz);
    let seg_len = (cfg.segment_s * rate).round() as usize;
    let channel_names = first.channel_names.clone();

    let mut raw = Vec::new();
    let mut labels = BTreeMap::new();
    let mut stats = BTreeMap::new();
    let mut reports = Vec::with_capacity(records.len());
    for rec in records {
        if rec.channel_names != channel_names {
            return Err(IngestError::InvalidParameter(format!(
                "record `{}` has channels {:?}, expected {:?}",
                rec.record_id, rec.channel_names, channel_names
            )));
        }
        if labels.contains_key(&rec.record_id) {
            return Err(IngestError::InvalidParameter(format!(
                "duplicate record id `{}`",
                rec.record_id
            )));
        }
        let rec = resample_record(rec, rate)?;
        let det = detect_event_regions(&rec, cycle, cfg.threshold_k)?;
        let segs = segment_and_pad(&rec, &det.regions, seg_len, cycle)?;
        let parsed = parse_label_tags(&rec.tag_string, taxonomy);
        reports.push(RecordReport {
            record_id: rec.record_id.clone(),
            regions: det.regions.clone(),
            threshold: det.threshold,
            n_segments: segs.len(),
            unknown_codes: parsed.warnings,
        });
        stats.insert(
            rec.record_id.clone(),
            NormStats::compute(&rec, &det.regions, cfg.stats_source)?,
        );
        labels.insert(rec.record_id.clone(), parsed.labels);
        raw.extend(segs);
    }
    let segments = normalize_segments(raw, &labels, &stats)?;
    let set = SegmentSet {
        channel_names,
        seg_len,
        sample_rate_hz: rate,
        codes: taxonomy.codes().map(str::to_string).collect(),
        segments,
        normalization: stats,
    };
    set.validate()?;
    Ok(Preprocessed { set, reports })
}

/// A dataset directory loaded into memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<RawRecord>,
    pub taxonomy: LabelTaxonomy,
}

/// Reads a `record_id<TAB>tag_string` manifest.
pub fn parse_label_manifest(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (id, tags) = l.split_once('\t').unwrap_or((l, ""));
            (id.trim().to_string(), tags.to_string())
        })
        .collect()
}

/// Loads `records/*.csv`, `taxonomy.tsv` and `labels.tsv` from `dir`.
///
/// A missing taxonomy falls back to the built-in event taxonomy and a
/// missing label manifest leaves every record unlabelled.
pub fn load_dataset(dir: &Path, schema: &ChannelSchema) -> Result<Dataset> {
    let tax_path = dir.join(TAXONOMY_FILE);
    let taxonomy = if tax_path.exists() {
        LabelTaxonomy::parse(&fs::read_to_string(&tax_path).map_err(io_err(&tax_path))?)?
    } else {
        LabelTaxonomy::default_events()
    };
    let labels_path = dir.join(LABELS_FILE);
    let tags = if labels_path.exists() {
        parse_label_manifest(&fs::read_to_string(&labels_path).map_err(io_err(&labels_path))?)
    } else {
        BTreeMap::new()
    };
    let rec_dir = dir.join(RECORDS_DIR);
    let mut paths: Vec<_> = fs::read_dir(&rec_dir)
        .map_err(io_err(&rec_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
        .collect();
    paths.sort();
    let mut records = Vec::with_capacity(paths.len());
    for p in paths {
        let id = p
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| IngestError::InvalidParameter(format!("bad file name {}", p.display())))?
            .to_string();
        let bytes = fs::read(&p).map_err(io_err(&p))?;
        let mut rec = parse_event_file(&id, &bytes, schema)?;
        rec.tag_string = tags.get(&id).cloned().unwrap_or_default();
        records.push(rec);
    }
    Ok(Dataset { records, taxonomy })
}

pub fn preprocess_dataset(
    dir: &Path,
    schema: &ChannelSchema,
    cfg: &PreprocessConfig,
) -> Result<(Preprocessed, LabelTaxonomy)> {
    let ds = load_dataset(dir, schema)?;
    Ok((preprocess_records(&ds.records, &ds.taxonomy, cfg)?, ds.taxonomy))
}

/// Record-level label sets keyed by record id.
pub fn record_labels(set: &SegmentSet) -> BTreeMap<String, LabelSet> {
    set.segments
        .iter()
        .map(|s| (s.source_record_id.clone(), s.labels.clone()))
        .collect()
}
