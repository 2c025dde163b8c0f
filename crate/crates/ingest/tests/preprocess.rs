use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use latscape_ingest::pipeline::{preprocess_dataset, preprocess_records, PreprocessConfig};
use latscape_ingest::segment::StatsSource;
use latscape_ingest::synth::{generate_records, read_classes, CLASSES_FILE, LABELS_FILE};
use latscape_ingest::*;

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        n_records: 12,
        record_duration_s: 1.5,
        ..SyntheticSpec::default()
    }
}

#[test]
fn two_channel_20ksps_round_trip() {
    let spec = SyntheticSpec {
        n_records: 1,
        channels: 2,
        sample_rate_hz: 20_000.0,
        classes: vec![],
        ..SyntheticSpec::default()
    };
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&spec, dir.path()).unwrap();
    let records = generate_records(&spec).unwrap();
    let bytes = fs::read(dir.path().join("records/rec_0000.csv")).unwrap();
    let rec = parse_event_file("rec_0000", &bytes, &spec.schema()).unwrap();
    assert_eq!(rec.len(), 20_000);
    assert_eq!(rec.channels(), 2);
    assert!((rec.sample_rate_hz - 20_000.0).abs() < 1e-9);
    for (got, want) in rec.samples.iter().zip(&records[0].samples) {
        let err = got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 5e-7, "max error {err}");
    }
}

#[test]
fn same_seed_writes_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&small_spec(), a.path()).unwrap();
    generate_synthetic_dataset(&small_spec(), b.path()).unwrap();
    assert_eq!(read_dir_bytes(a.path()), read_dir_bytes(b.path()));

    let c = tempfile::tempdir().unwrap();
    let other = SyntheticSpec {
        seed: 8,
        ..small_spec()
    };
    generate_synthetic_dataset(&other, c.path()).unwrap();
    assert_ne!(read_dir_bytes(a.path()), read_dir_bytes(c.path()));
}

#[test]
fn three_classes_of_fifty_give_150_manifest_entries() {
    let spec = SyntheticSpec {
        n_records: 150,
        record_duration_s: 0.2,
        onset_s: [0.02, 0.05],
        classes: SyntheticSpec::default()
            .classes
            .into_iter()
            .map(|mut c| {
                c.duration_s = [0.05, 0.1];
                c
            })
            .collect(),
        ..SyntheticSpec::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let truth = generate_synthetic_dataset(&spec, dir.path()).unwrap();
    assert_eq!(truth.len(), 150);
    let manifest = fs::read_to_string(dir.path().join(LABELS_FILE)).unwrap();
    let lines: Vec<&str> = manifest.lines().collect();
    assert_eq!(lines.len(), 150);
    let mut per_class = std::collections::BTreeMap::new();
    for (id, class) in read_classes(dir.path()).unwrap() {
        *per_class.entry(class.clone()).or_insert(0) += 1;
        let cdef = spec.classes.iter().find(|c| c.name == class).unwrap();
        let line = lines.iter().find(|l| l.split('\t').next() == Some(id.as_str())).unwrap();
        let tags = line.split('\t').nth(1).unwrap();
        assert_eq!(tags, cdef.codes.join("|"));
    }
    assert!(per_class.values().all(|&n| n == 50), "{per_class:?}");
    assert!(dir.path().join(CLASSES_FILE).exists());
}

#[test]
fn undisturbed_noise_free_records_have_no_events() {
    let spec = SyntheticSpec {
        n_records: 3,
        classes: vec![],
        noise_std: 0.0,
        ..SyntheticSpec::default()
    };
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&spec, dir.path()).unwrap();
    let ds = load_dataset(dir.path(), &spec.schema()).unwrap();
    let cycle = cycle_len_samples(ds.records[0].sample_rate_hz, spec.base_freq_hz);
    for rec in &ds.records {
        let det = detect_event_regions(rec, cycle, 5.0).unwrap();
        assert!(det.regions.is_empty(), "{}: {:?}", rec.record_id, det.regions);
    }
}

#[test]
fn injected_disturbances_are_detected() {
    let spec = SyntheticSpec {
        n_records: 9,
        ..SyntheticSpec::default()
    };
    let records = generate_records(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&spec, dir.path()).unwrap();
    let ds = load_dataset(dir.path(), &spec.schema()).unwrap();
    let cycle = cycle_len_samples(spec.sample_rate_hz, spec.base_freq_hz);
    for (truth, rec) in records.iter().zip(&ds.records) {
        let (s, e) = truth.event.unwrap();
        let det = detect_event_regions(rec, cycle, 5.0).unwrap();
        let hit = det.regions.iter().any(|r| r.overlap(s, e) > 0);
        assert!(hit, "{}: event {s}..{e} missed, got {:?}", rec.record_id, det.regions);
    }
}

#[test]
fn detection_ignores_constant_offsets() {
    let records = generate_records(&small_spec()).unwrap();
    let names: Vec<String> = small_spec().channel_names();
    for r in records.iter().take(6) {
        let rec = RawRecord::new(r.record_id.clone(), names.clone(), r.samples.clone(), 2000.0).unwrap();
        let shifted = RawRecord::new(
            r.record_id.clone(),
            names.clone(),
            r.samples.iter().map(|c| c.iter().map(|v| v + 1234.5).collect()).collect(),
            2000.0,
        )
        .unwrap();
        let a = detect_event_regions(&rec, 33, 5.0).unwrap();
        let b = detect_event_regions(&shifted, 33, 5.0).unwrap();
        assert_eq!(a.regions, b.regions);
    }
}

#[test]
fn baseline_statistics_after_normalization() {
    let spec = small_spec();
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&spec, dir.path()).unwrap();
    let (pre, _) = preprocess_dataset(dir.path(), &spec.schema(), &PreprocessConfig::default()).unwrap();
    let set = &pre.set;
    assert_eq!(set.seg_len, 2000);
    for s in &set.segments {
        assert!(s.values.iter().all(|c| c.len() == set.seg_len));
    }
    let ds = load_dataset(dir.path(), &spec.schema()).unwrap();
    for (rec, report) in ds.records.iter().zip(&pre.reports) {
        let stats = &set.normalization[&rec.record_id];
        assert!(stats.source.iter().all(|s| *s == StatsSource::NonEventBaseline));
        let in_event = |j: usize| report.regions.iter().any(|r| r.start_sample <= j && j < r.end_sample);
        for (ch, x) in rec.samples.iter().enumerate() {
            let z: Vec<f64> = x
                .iter()
                .enumerate()
                .filter(|(j, _)| !in_event(*j))
                .map(|(_, v)| (v - stats.mean[ch]) / stats.std[ch])
                .collect();
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-9, "mean {mean}");
            assert!((std - 1.0).abs() < 1e-9, "std {std}");
        }
        // the segments carry exactly these normalized values
        let seg = set.segments.iter().find(|s| s.source_record_id == rec.record_id).unwrap();
        for (ch, x) in rec.samples.iter().enumerate() {
            let want = (x[17] - stats.mean[ch]) / stats.std[ch];
            assert!((seg.values[ch][17] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn preprocessing_is_bit_exact() {
    let spec = small_spec();
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(&spec, dir.path()).unwrap();
    let cfg = PreprocessConfig::default();
    let (a, _) = preprocess_dataset(dir.path(), &spec.schema(), &cfg).unwrap();
    let (b, _) = preprocess_dataset(dir.path(), &spec.schema(), &cfg).unwrap();
    assert_eq!(fingerprint(&a.set).unwrap(), fingerprint(&b.set).unwrap());
    let bits = |s: &SegmentSet| -> Vec<u64> {
        s.segments
            .iter()
            .flat_map(|seg| seg.values.iter().flatten().map(|v| v.to_bits()))
            .collect()
    };
    assert_eq!(bits(&a.set), bits(&b.set));

    let out = tempfile::tempdir().unwrap();
    let fp = write_archive(&a.set, out.path()).unwrap();
    assert_eq!(fp, fingerprint(&a.set).unwrap());
    let back = read_archive(out.path()).unwrap();
    assert_eq!(back.len(), a.set.len());
    assert_eq!(back.segments[3].labels, a.set.segments[3].labels);
}

#[test]
fn padding_and_durations() {
    let spec = small_spec();
    let records = generate_records(&spec).unwrap();
    let names = spec.channel_names();
    let raw: Vec<RawRecord> = records
        .iter()
        .map(|r| {
            let mut rec = RawRecord::new(r.record_id.clone(), names.clone(), r.samples.clone(), 2000.0).unwrap();
            rec.tag_string = r.tag_string.clone();
            rec
        })
        .collect();
    let pre = preprocess_records(&raw, &LabelTaxonomy::default_events(), &PreprocessConfig::default()).unwrap();
    // 1.5 s records split into one full and one half-padded segment
    assert_eq!(pre.set.len(), 2 * raw.len());
    for pair in pre.set.segments.chunks(2) {
        assert_eq!(pair[0].padded_fraction, 0.0);
        assert!((pair[1].padded_fraction - 0.5).abs() < 1e-12);
        assert!(pair.iter().all(|s| s.event_duration_s <= 1.0));
    }
    let total: f64 = pre.set.segments.iter().map(|s| s.event_duration_s).sum();
    let flagged: usize = pre.reports.iter().flat_map(|r| &r.regions).map(|r| r.len()).sum();
    assert!((total - flagged as f64 / 2000.0).abs() < 1e-9);
    let labelled = pre.set.segments.iter().filter(|s| !s.labels.codes.is_empty()).count();
    assert_eq!(labelled, pre.set.len());
}

#[test]
fn resample_round_trip_of_band_limited_signal() {
    // independent interpolation: evaluate the piecewise-linear interpolant
    // by locating the bracketing knots with a binary search
    fn interp(xs: &[f64], ys: &[f64], t: f64) -> f64 {
        let i = xs.partition_point(|&x| x <= t);
        if i == 0 {
            return ys[0];
        }
        if i >= xs.len() {
            return ys[ys.len() - 1];
        }
        let (x0, x1) = (xs[i - 1], xs[i]);
        ys[i - 1] + (ys[i] - ys[i - 1]) * (t - x0) / (x1 - x0)
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let comps: Vec<(f64, f64, f64)> = (0..8)
        .map(|_| (rng.random_range(5.0..400.0), rng.random_range(0.2..1.0), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let n = 1000;
    let x: Vec<f64> = (0..n)
        .map(|j| {
            let t = j as f64 / 8000.0;
            comps.iter().map(|(f, a, p)| a * (2.0 * PI * f * t + p).sin()).sum()
        })
        .collect();
    let up = resample_linear(&x, 8000.0, 20_000.0).unwrap();
    assert_eq!(up.len(), 2500);
    assert_eq!(up[0], x[0]);
    let knots: Vec<f64> = (0..n).map(|j| j as f64 / 8000.0).collect();
    for (i, v) in up.iter().enumerate() {
        let want = interp(&knots, &x, i as f64 / 20_000.0);
        assert!((v - want).abs() < 1e-9, "sample {i}");
    }
    let back = resample_linear(&up, 20_000.0, 8000.0).unwrap();
    assert_eq!(back.len(), n);
    let mean = x.iter().sum::<f64>() / n as f64;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let err = back.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 0.05 * std, "err {err} std {std}");
}
