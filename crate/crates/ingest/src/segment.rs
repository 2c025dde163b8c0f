use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{IngestError, Result};
use crate::labels::LabelSet;
use crate::record::RawRecord;
use crate::signal::EventRegion;

/// A fixed-length slice of a record before normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSegment {
    pub segment_id: String,
    pub source_record_id: String,
    /// `values[channel][t]`
    pub values: Vec<Vec<f64>>,
    pub event_duration_s: f64,
    pub padded_fraction: f64,
}

/// Largest gap between event regions, as `[start, end)`.
pub fn largest_non_event_region(len: usize, regions: &[EventRegion]) -> Option<EventRegion> {
    let mut sorted = regions.to_vec();
    sorted.sort_by_key(|r| r.start_sample);
    let mut best: Option<EventRegion> = None;
    let mut cursor = 0;
    let mut consider = |start: usize, end: usize| {
        if end > start && best.is_none_or(|b| end - start > b.len()) {
            best = Some(EventRegion {
                start_sample: start,
                end_sample: end,
            });
        }
    };
    for r in &sorted {
        consider(cursor, r.start_sample.min(len));
        cursor = cursor.max(r.end_sample);
    }
    consider(cursor, len);
    best
}

/// Splits a record into `ceil(len / seg_len)` contiguous segments.
///
/// A short final segment is completed by circularly tiling the largest
/// non-event region, starting just after the in-region sample whose value
/// and slope best continue the last real sample. The mismatch being
/// minimized is `Σ_channels |Δvalue| + 0.5 · cycle_len · |Δslope|`.
pub fn segment_and_pad(
    record: &RawRecord,
    regions: &[EventRegion],
    seg_len_samples: usize,
    cycle_len_samples: usize,
) -> Result<Vec<RawSegment>> {
    if seg_len_samples == 0 {
        return Err(IngestError::InvalidParameter("segment length must be positive".into()));
    }
    let len = record.len();
    let n_segments = len.div_ceil(seg_len_samples);
    let mut out = Vec::with_capacity(n_segments);
    for s in 0..n_segments {
        let start = s * seg_len_samples;
        let end = (start + seg_len_samples).min(len);
        let real = end - start;
        let mut values: Vec<Vec<f64>> = record.samples.iter().map(|c| c[start..end].to_vec()).collect();
        if real < seg_len_samples {
            let base = largest_non_event_region(len, regions)
                .ok_or_else(|| IngestError::NoBaseline(record.record_id.clone()))?;
            let offset = best_continuation(record, &values, base, cycle_len_samples);
            let rlen = base.len();
            for (ch, v) in values.iter_mut().enumerate() {
                let src = &record.samples[ch][base.start_sample..base.end_sample];
                v.extend((0..seg_len_samples - real).map(|i| src[(offset + 1 + i) % rlen]));
            }
        }
        let event_samples: usize = regions.iter().map(|r| r.overlap(start, end)).sum();
        out.push(RawSegment {
            segment_id: format!("{}_s{s}", record.record_id),
            source_record_id: record.record_id.clone(),
            values,
            event_duration_s: event_samples as f64 / record.sample_rate_hz,
            padded_fraction: (seg_len_samples - real) as f64 / seg_len_samples as f64,
        });
    }
    Ok(out)
}

/// Offset within `base` whose sample best matches the last real sample.
fn best_continuation(
    record: &RawRecord,
    partial: &[Vec<f64>],
    base: EventRegion,
    cycle_len: usize,
) -> usize {
    let slope_weight = 0.5 * cycle_len as f64;
    let rlen = base.len();
    let tail: Vec<(f64, f64)> = partial
        .iter()
        .map(|v| {
            let last = v[v.len() - 1];
            let slope = if v.len() >= 2 { last - v[v.len() - 2] } else { 0.0 };
            (last, slope)
        })
        .collect();
    let mut best = (f64::INFINITY, 0);
    // the successor of the final sample would wrap to the region start
    for o in 0..rlen.saturating_sub(1).max(1) {
        let cost: f64 = record
            .samples
            .iter()
            .zip(&tail)
            .map(|(x, &(last, slope))| {
                let r = &x[base.start_sample..base.end_sample];
                let prev = if o > 0 { r[o - 1] } else { r[rlen - 1] };
                let rs = if rlen >= 2 { r[o] - prev } else { 0.0 };
                (r[o] - last).abs() + slope_weight * (rs - slope).abs()
            })
            .sum();
        if cost < best.0 {
            best = (cost, o);
        }
    }
    best.1
}

/// Where per-channel normalization statistics come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsSource {
    #[default]
    NonEventBaseline,
    WholeRecord,
}

/// Per-channel mean and standard deviation used for z-scoring one record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// statistics source actually used per channel
    pub source: Vec<StatsSource>,
}

impl NormStats {
    /// Computes statistics from the non-event samples of `record` (or the
    /// whole record), falling back per channel to whole-record statistics
    /// when the baseline is empty or flat.
    pub fn compute(record: &RawRecord, regions: &[EventRegion], preferred: StatsSource) -> Result<Self> {
        let mask: Vec<bool> = {
            let mut m = vec![true; record.len()];
            for r in regions {
                for v in &mut m[r.start_sample.min(record.len())..r.end_sample.min(record.len())] {
                    *v = false;
                }
            }
            m
        };
        let mut stats = NormStats {
            mean: Vec::new(),
            std: Vec::new(),
            source: Vec::new(),
        };
        for (ch, x) in record.samples.iter().enumerate() {
            let baseline = (preferred == StatsSource::NonEventBaseline)
                .then(|| masked_moments(x, &mask))
                .flatten()
                .filter(|&(_, s)| s > 0.0);
            let (mean, std, source) = match baseline {
                Some((m, s)) => (m, s, StatsSource::NonEventBaseline),
                None => {
                    let (m, s) = masked_moments(x, &vec![true; x.len()]).unwrap_or((0.0, 0.0));
                    (m, s, StatsSource::WholeRecord)
                }
            };
            if !(std > 0.0 && std.is_finite()) {
                return Err(IngestError::ConstantChannel {
                    record: record.record_id.clone(),
                    channel: record.channel_names[ch].clone(),
                });
            }
            stats.mean.push(mean);
            stats.std.push(std);
            stats.source.push(source);
        }
        Ok(stats)
    }
}

fn masked_moments(x: &[f64], mask: &[bool]) -> Option<(f64, f64)> {
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return None;
    }
    let mean = x.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v).sum::<f64>() / n as f64;
    let var = x
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| (v - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    Some((mean, var.sqrt()))
}

/// A normalized fixed-length segment with metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub segment_id: String,
    pub source_record_id: String,
    /// `values[channel][t]`, z-scored
    pub values: Vec<Vec<f64>>,
    pub labels: LabelSet,
    pub event_duration_s: f64,
    pub padded_fraction: f64,
}

/// Normalized segments sharing channel layout and length.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSet {
    pub channel_names: Vec<String>,
    pub seg_len: usize,
    pub sample_rate_hz: f64,
    /// taxonomy code order for every label vector
    pub codes: Vec<String>,
    pub segments: Vec<Segment>,
    /// statistics per source record, for de-normalization
    pub normalization: BTreeMap<String, NormStats>,
}

impl SegmentSet {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().map(|s| s.segment_id.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = std::collections::HashSet::new();
        for s in &self.segments {
            if !ids.insert(s.segment_id.as_str()) {
                return Err(IngestError::InvalidArchive(format!(
                    "duplicate segment id `{}`",
                    s.segment_id
                )));
            }
            if s.values.len() != self.channels() || s.values.iter().any(|c| c.len() != self.seg_len) {
                return Err(IngestError::InvalidArchive(format!(
                    "segment `{}` is not {} × {}",
                    s.segment_id,
                    self.channels(),
                    self.seg_len
                )));
            }
            if s.values.iter().flatten().any(|v| !v.is_finite()) {
                return Err(IngestError::InvalidArchive(format!(
                    "segment `{}` has non-finite values",
                    s.segment_id
                )));
            }
            if s.labels.bits.len() != self.codes.len() {
                return Err(IngestError::InvalidArchive(format!(
                    "segment `{}` label vector has wrong length",
                    s.segment_id
                )));
            }
        }
        Ok(())
    }
}

/// Z-scores each segment with the statistics of its source record.
pub fn normalize_segments(
    segments: Vec<RawSegment>,
    labels: &BTreeMap<String, LabelSet>,
    stats: &BTreeMap<String, NormStats>,
) -> Result<Vec<Segment>> {
    segments
        .into_iter()
        .map(|s| {
            let st = stats.get(&s.source_record_id).ok_or_else(|| {
                IngestError::InvalidParameter(format!(
                    "no normalization statistics for `{}`",
                    s.source_record_id
                ))
            })?;
            let label = labels.get(&s.source_record_id).cloned().ok_or_else(|| {
                IngestError::InvalidParameter(format!("no labels for `{}`", s.source_record_id))
            })?;
            let values = s
                .values
                .into_iter()
                .enumerate()
                .map(|(ch, v)| v.into_iter().map(|x| (x - st.mean[ch]) / st.std[ch]).collect())
                .collect();
            Ok(Segment {
                segment_id: s.segment_id,
                source_record_id: s.source_record_id,
                values,
                labels: label,
                event_duration_s: s.event_duration_s,
                padded_fraction: s.padded_fraction,
            })
        })
        .collect()
}
