//! On-disk SegmentSet archive: `segments.bin` holds little-endian `f32`
//! values laid out `[segment][channel][sample]`; `segments.meta.json`
//! holds everything else.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, IngestError, Result};
use crate::labels::LabelSet;
use crate::segment::{NormStats, Segment, SegmentSet};

pub const SEGMENTS_BIN: &str = "segments.bin";
pub const SEGMENTS_META: &str = "segments.meta.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveShape {
    pub n_segments: usize,
    pub channels: usize,
    pub seg_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentMeta {
    pub segment_id: String,
    pub source_record_id: String,
    pub labels: Vec<String>,
    pub event_duration_s: f64,
    pub padded_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    pub shape: ArchiveShape,
    pub channel_names: Vec<String>,
    pub sample_rate_hz: f64,
    pub codes: Vec<String>,
    pub segments: Vec<SegmentMeta>,
    pub normalization: BTreeMap<String, NormStats>,
}

/// Serializes a SegmentSet into the archive byte streams.
pub fn encode(set: &SegmentSet) -> Result<(Vec<u8>, Vec<u8>)> {
    set.validate()?;
    let mut bin = Vec::with_capacity(set.len() * set.channels() * set.seg_len * 4);
    for s in &set.segments {
        for ch in &s.values {
            for &v in ch {
                bin.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    let meta = ArchiveMeta {
        shape: ArchiveShape {
            n_segments: set.len(),
            channels: set.channels(),
            seg_len: set.seg_len,
        },
        channel_names: set.channel_names.clone(),
        sample_rate_hz: set.sample_rate_hz,
        codes: set.codes.clone(),
        segments: set
            .segments
            .iter()
            .map(|s| SegmentMeta {
                segment_id: s.segment_id.clone(),
                source_record_id: s.source_record_id.clone(),
                labels: s.labels.codes.clone(),
                event_duration_s: s.event_duration_s,
                padded_fraction: s.padded_fraction,
            })
            .collect(),
        normalization: set.normalization.clone(),
    };
    let json = serde_json::to_vec_pretty(&meta)?;
    Ok((bin, json))
}

pub fn decode(bin: &[u8], meta_json: &[u8]) -> Result<SegmentSet> {
    let meta: ArchiveMeta = serde_json::from_slice(meta_json)?;
    let ArchiveShape {
        n_segments,
        channels,
        seg_len,
    } = meta.shape;
    if meta.segments.len() != n_segments || meta.channel_names.len() != channels {
        return Err(IngestError::InvalidArchive(
            "metadata disagrees with declared shape".into(),
        ));
    }
    let expected = n_segments * channels * seg_len * 4;
    if bin.len() != expected {
        return Err(IngestError::InvalidArchive(format!(
            "{SEGMENTS_BIN} has {} bytes, expected {expected}",
            bin.len()
        )));
    }
    let mut floats = bin
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64);
    let mut segments = Vec::with_capacity(n_segments);
    for sm in meta.segments {
        let values = (0..channels)
            .map(|_| floats.by_ref().take(seg_len).collect())
            .collect();
        let mut bits = vec![0u8; meta.codes.len()];
        for code in &sm.labels {
            let i = meta.codes.iter().position(|c| c == code).ok_or_else(|| {
                IngestError::InvalidArchive(format!("segment label `{code}` not in code list"))
            })?;
            bits[i] = 1;
        }
        segments.push(Segment {
            segment_id: sm.segment_id,
            source_record_id: sm.source_record_id,
            values,
            labels: LabelSet {
                bits,
                codes: sm.labels,
            },
            event_duration_s: sm.event_duration_s,
            padded_fraction: sm.padded_fraction,
        });
    }
    let set = SegmentSet {
        channel_names: meta.channel_names,
        seg_len,
        sample_rate_hz: meta.sample_rate_hz,
        codes: meta.codes,
        segments,
        normalization: meta.normalization,
    };
    set.validate()?;
    Ok(set)
}

/// Writes the archive into `dir`, creating it if needed.
pub fn write_archive(set: &SegmentSet, dir: &Path) -> Result<String> {
    let (bin, meta) = encode(set)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    fs::write(dir.join(SEGMENTS_BIN), &bin).map_err(io_err(dir.join(SEGMENTS_BIN)))?;
    fs::write(dir.join(SEGMENTS_META), &meta).map_err(io_err(dir.join(SEGMENTS_META)))?;
    Ok(fingerprint_bytes(&bin, &meta))
}

pub fn read_archive(dir: &Path) -> Result<SegmentSet> {
    let bin = fs::read(dir.join(SEGMENTS_BIN)).map_err(io_err(dir.join(SEGMENTS_BIN)))?;
    let meta = fs::read(dir.join(SEGMENTS_META)).map_err(io_err(dir.join(SEGMENTS_META)))?;
    decode(&bin, &meta)
}

/// Content hash of an archive directory.
pub fn archive_fingerprint(dir: &Path) -> Result<String> {
    let bin = fs::read(dir.join(SEGMENTS_BIN)).map_err(io_err(dir.join(SEGMENTS_BIN)))?;
    let meta = fs::read(dir.join(SEGMENTS_META)).map_err(io_err(dir.join(SEGMENTS_META)))?;
    Ok(fingerprint_bytes(&bin, &meta))
}

/// Content hash of the archive encoding of `set`.
pub fn fingerprint(set: &SegmentSet) -> Result<String> {
    let (bin, meta) = encode(set)?;
    Ok(fingerprint_bytes(&bin, &meta))
}

fn fingerprint_bytes(bin: &[u8], meta: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update((bin.len() as u64).to_le_bytes());
    h.update(bin);
    h.update(meta);
    hex::encode(h.finalize())
}
