use serde::{Deserialize, Serialize};

use crate::error::{IngestError, Result};
use crate::record::RawRecord;

/// Linear-interpolation resampling.
///
/// The output has `round(len · dst / src)` samples; sample `i` is read at
/// source position `i · src / dst`, clamped to the final source sample.
pub fn resample_linear(series: &[f64], src_rate_hz: f64, dst_rate_hz: f64) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(IngestError::TooShort {
            needed: 2,
            got: series.len(),
        });
    }
    if !(src_rate_hz > 0.0 && dst_rate_hz > 0.0) {
        return Err(IngestError::InvalidParameter(format!(
            "rates must be positive, got {src_rate_hz} and {dst_rate_hz}"
        )));
    }
    if src_rate_hz == dst_rate_hz {
        return Ok(series.to_vec());
    }
    let out_len = (series.len() as f64 * dst_rate_hz / src_rate_hz).round() as usize;
    let step = src_rate_hz / dst_rate_hz;
    let last = series.len() - 1;
    Ok((0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let lo = pos.floor() as usize;
            if lo >= last {
                series[last]
            } else {
                let frac = pos - lo as f64;
                series[lo] + frac * (series[lo + 1] - series[lo])
            }
        })
        .collect())
}

/// Resamples every channel of `record` to `dst_rate_hz`.
pub fn resample_record(record: &RawRecord, dst_rate_hz: f64) -> Result<RawRecord> {
    let samples = record
        .samples
        .iter()
        .map(|c| resample_linear(c, record.sample_rate_hz, dst_rate_hz))
        .collect::<Result<Vec<_>>>()?;
    let mut out = RawRecord::new(
        record.record_id.clone(),
        record.channel_names.clone(),
        samples,
        dst_rate_hz,
    )?;
    out.tag_string = record.tag_string.clone();
    Ok(out)
}

/// Samples per mains cycle, `floor(rate / line_frequency)`.
pub fn cycle_len_samples(sample_rate_hz: f64, line_freq_hz: f64) -> usize {
    (sample_rate_hz / line_freq_hz).floor() as usize
}

/// Half-open sample interval `[start_sample, end_sample)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRegion {
    pub start_sample: usize,
    pub end_sample: usize,
}

impl EventRegion {
    pub fn len(&self) -> usize {
        self.end_sample - self.start_sample
    }

    pub fn is_empty(&self) -> bool {
        self.end_sample <= self.start_sample
    }

    pub fn overlap(&self, start: usize, end: usize) -> usize {
        let lo = self.start_sample.max(start);
        let hi = self.end_sample.min(end);
        hi.saturating_sub(lo)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventDetection {
    pub regions: Vec<EventRegion>,
    /// Deviation score per whole cycle; cycle 0 has no predecessor and
    /// scores 0.
    pub cycle_scores: Vec<f64>,
    pub threshold: f64,
}

/// Flags cycles that deviate from their predecessor.
///
/// A cycle's score is the RMS over its window of `|x[j] − x[j − L]|`,
/// maximized across channels. Cycles scoring above
/// `median + threshold_k · MAD` are flagged and runs of adjacent flagged
/// cycles merge into one region.
pub fn detect_event_regions(
    record: &RawRecord,
    cycle_len_samples: usize,
    threshold_k: f64,
) -> Result<EventDetection> {
    let l = cycle_len_samples;
    if l < 2 {
        return Err(IngestError::InvalidParameter(format!(
            "cycle length must be at least 2, got {l}"
        )));
    }
    if record.len() < 3 * l {
        return Err(IngestError::TooShort {
            needed: 3 * l,
            got: record.len(),
        });
    }
    let n_cycles = record.len() / l;
    let mut scores = vec![0.0; n_cycles];
    for (c, score) in scores.iter_mut().enumerate().skip(1) {
        *score = record
            .samples
            .iter()
            .map(|x| {
                let ss: f64 = (c * l..(c + 1) * l).map(|j| (x[j] - x[j - l]).powi(2)).sum();
                (ss / l as f64).sqrt()
            })
            .fold(0.0, f64::max);
    }

    let tail = &scores[1..];
    let med = median(tail);
    let mad = median(&tail.iter().map(|s| (s - med).abs()).collect::<Vec<_>>());
    // Rounding residue on a perfectly periodic signal is not an event.
    let floor = 1e-9 * record.samples.iter().map(|x| std_dev(x)).fold(0.0, f64::max);
    let threshold = (med + threshold_k * mad).max(floor);

    let mut regions: Vec<EventRegion> = Vec::new();
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s <= threshold {
            continue;
        }
        let (start, end) = (c * l, (c + 1) * l);
        match regions.last_mut() {
            Some(r) if r.end_sample == start => r.end_sample = end,
            _ => regions.push(EventRegion {
                start_sample: start,
                end_sample: end,
            }),
        }
    }
    Ok(EventDetection {
        regions,
        cycle_scores: scores,
        threshold,
    })
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

pub(crate) fn std_dev(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn record(samples: Vec<Vec<f64>>, rate: f64) -> RawRecord {
        let names = (0..samples.len()).map(|i| format!("ch{i}")).collect();
        RawRecord::new("r", names, samples, rate).unwrap()
    }

    #[test]
    fn resample_identity() {
        let s = vec![0.5, -1.0, 2.0];
        assert_eq!(resample_linear(&s, 100.0, 100.0).unwrap(), s);
    }

    #[test]
    fn resample_upsample_midpoints() {
        let out = resample_linear(&[0.0, 1.0, 2.0, 3.0], 4.0, 8.0).unwrap();
        assert_eq!(out, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.0]);
    }

    #[test]
    fn resample_needs_two_samples() {
        assert!(resample_linear(&[1.0], 1.0, 2.0).is_err());
    }

    #[test]
    fn cycle_len_floors() {
        assert_eq!(cycle_len_samples(20_000.0, 60.0), 333);
        assert_eq!(cycle_len_samples(2_000.0, 60.0), 33);
    }

    #[test]
    fn periodic_signal_has_no_events() {
        let l = 40;
        let x: Vec<f64> = (0..l * 20).map(|j| (2.0 * PI * j as f64 / l as f64).sin()).collect();
        let det = detect_event_regions(&record(vec![x], 2400.0), l, 5.0).unwrap();
        assert!(det.regions.is_empty(), "{:?}", det.regions);
    }

    #[test]
    fn amplitude_step_is_one_region() {
        // 60 Hz at 20 kHz: the true period (333.3 samples) is not a whole
        // number of samples, so steady cycles carry a small residual.
        let rate = 20_000.0;
        let l = cycle_len_samples(rate, 60.0);
        let n = l * 30;
        let x: Vec<f64> = (0..n)
            .map(|j| {
                let c = j / l;
                let amp = if (10..=12).contains(&c) { 2.0 } else { 1.0 };
                amp * (2.0 * PI * 60.0 * j as f64 / rate).sin()
            })
            .collect();
        let rec = record(vec![x.clone()], rate);
        let det = detect_event_regions(&rec, l, 5.0).unwrap();

        // hand-rolled per-cycle scores
        for c in 1..30 {
            let ss: f64 = (c * l..(c + 1) * l).map(|j| (x[j] - x[j - l]).powi(2)).sum();
            let expect = (ss / l as f64).sqrt();
            assert!((det.cycle_scores[c] - expect).abs() < 1e-12);
        }
        assert_eq!(det.regions.len(), 1, "{:?}", det.regions);
        let r = det.regions[0];
        assert!(r.start_sample <= 10 * l && r.end_sample >= 13 * l, "{r:?}");
        assert!(r.end_sample <= 14 * l);
    }

    #[test]
    fn too_short_record() {
        let rec = record(vec![vec![0.0; 50]], 1000.0);
        assert!(matches!(
            detect_event_regions(&rec, 20, 5.0),
            Err(IngestError::TooShort { needed: 60, got: 50 })
        ));
    }
}
