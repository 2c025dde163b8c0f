use std::collections::BTreeMap;

use latscape_autodiff::Tape;
use latscape_encoders::model::Batch;
use latscape_encoders::{
    build_model, extract_latents, fit, load_checkpoint, save_checkpoint, train, EncoderConfig, EncoderError,
    EncoderKind, TrainedModel,
};
use latscape_ingest::pipeline::{preprocess_dataset, PreprocessConfig};
use latscape_ingest::{generate_synthetic_dataset, LabelSet, Segment, SegmentSet, SyntheticSpec};

const KINDS: [EncoderKind; 3] = [EncoderKind::Tft, EncoderKind::VaeConv, EncoderKind::VaeLstm];

fn small(kind: EncoderKind) -> EncoderConfig {
    EncoderConfig {
        kind,
        model_input_len: 32,
        d_model: 16,
        n_heads: 2,
        patch_len: 4,
        kernel_sizes: vec![3, 3],
        strides: vec![2, 2],
        batch_size: 4,
        epochs: 3,
        ..EncoderConfig::default()
    }
}

fn segment_set(rows: &[Vec<Vec<f64>>]) -> SegmentSet {
    let channels = rows[0].len();
    SegmentSet {
        channel_names: (0..channels).map(|c| format!("ch{c}")).collect(),
        seg_len: rows[0][0].len(),
        sample_rate_hz: 1000.0,
        codes: vec!["A".into()],
        segments: rows
            .iter()
            .enumerate()
            .map(|(i, values)| Segment {
                segment_id: format!("rec_{i:03}_0"),
                source_record_id: format!("rec_{i:03}"),
                values: values.clone(),
                labels: LabelSet {
                    bits: vec![1],
                    codes: vec!["A".into()],
                },
                event_duration_s: 0.0,
                padded_fraction: 0.0,
            })
            .collect(),
        normalization: BTreeMap::new(),
    }
}

fn wave(channels: usize, len: usize, phase: f64) -> Vec<Vec<f64>> {
    (0..channels)
        .map(|c| {
            (0..len)
                .map(|t| (2.0 * std::f64::consts::PI * t as f64 / len as f64 + phase + c as f64).sin())
                .collect()
        })
        .collect()
}

fn toy_set(n: usize, channels: usize) -> SegmentSet {
    let rows: Vec<_> = (0..n).map(|i| wave(channels, 40, 0.3 * i as f64)).collect();
    segment_set(&rows)
}

fn synthetic_set() -> SegmentSet {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::default();
    generate_synthetic_dataset(&spec, dir.path()).unwrap();
    preprocess_dataset(dir.path(), &spec.schema(), &PreprocessConfig::default()).unwrap().0.set
}

fn same_params(a: &TrainedModel, b: &TrainedModel) -> bool {
    a.params.len() == b.params.len()
        && a
            .params
            .iter()
            .all(|(name, t)| b.params.get(name).map(|u| u.data() == t.data()).unwrap_or(false))
}

#[test]
fn tft_embedding_shape() {
    let model = build_model(&EncoderConfig::default(), 6).unwrap();
    let rows: Vec<Vec<f64>> = (0..3).map(|i| vec![0.01 * i as f64; 6 * 512]).collect();
    let batch = Batch {
        rows: rows.iter().map(Vec::as_slice).collect(),
        channels: 6,
        len: 512,
    };
    let mut tape = Tape::new();
    let bound = model.params.bind_frozen(&mut tape);
    let z = model.encode(&mut tape, &bound, &batch).unwrap();
    assert_eq!(tape.shape(z), &[3, 8]);
}

#[test]
fn collapsing_strides_rejected() {
    let cfg = EncoderConfig {
        kind: EncoderKind::VaeConv,
        model_input_len: 8,
        ..EncoderConfig::default()
    };
    assert!(matches!(build_model(&cfg, 6), Err(EncoderError::InvalidConfig(_))));
}

#[test]
fn initialization_follows_seed() {
    for kind in KINDS {
        let a = build_model(&small(kind), 3).unwrap();
        let b = build_model(&small(kind), 3).unwrap();
        let c = build_model(&EncoderConfig { seed: 7, ..small(kind) }, 3).unwrap();
        assert!(same_params(&a, &b), "{kind}");
        assert!(!same_params(&a, &c), "{kind}");
    }
}

#[test]
fn zero_epochs_leave_model_unchanged() {
    let set = toy_set(6, 2);
    for kind in KINDS {
        let cfg = EncoderConfig { epochs: 0, ..small(kind) };
        let init = build_model(&cfg, 2).unwrap();
        let (trained, report) = train(init.clone(), &set).unwrap();
        assert!(same_params(&init, &trained), "{kind}");
        assert!(report.epoch_loss.is_empty());
        assert_eq!(report.epochs_completed, 0);
    }
}

#[test]
fn channel_mismatch_rejected() {
    let model = build_model(&small(EncoderKind::Tft), 3).unwrap();
    let set = toy_set(4, 2);
    assert!(matches!(
        train(model.clone(), &set),
        Err(EncoderError::ChannelMismatch { expected: 3, got: 2 })
    ));
    assert!(matches!(extract_latents(&model, &set), Err(EncoderError::ChannelMismatch { .. })));
}

#[test]
fn empty_set_rejected() {
    let mut set = toy_set(2, 2);
    set.segments.clear();
    assert!(matches!(fit(&small(EncoderKind::Tft), &set), Err(EncoderError::EmptyDataset)));
}

#[test]
fn training_reduces_loss_on_synthetic_classes() {
    let set = synthetic_set();
    for kind in KINDS {
        let cfg = EncoderConfig {
            kind,
            latent_dim: 8,
            model_input_len: 64,
            kernel_sizes: vec![7, 5],
            strides: vec![4, 2],
            epochs: 20,
            seed: 42,
            ..EncoderConfig::default()
        };
        let (model, report) = fit(&cfg, &set).unwrap();
        assert_eq!(report.epoch_loss.len(), 20);
        assert_eq!(report.epochs_completed, 20);
        assert!(report.wall_time_s >= 0.0);
        let (first, last) = (report.epoch_loss[0], *report.epoch_loss.last().unwrap());
        assert!(last < first, "{kind}: {first} -> {last}");
        if kind.is_vae() {
            assert_eq!(report.epoch_kl.len(), 20);
            assert!(report.min_batch_kl.unwrap() >= -1e-9, "{kind}");
            assert!(report.epoch_kl.iter().all(|&k| k >= 0.0));
        } else {
            assert!(report.epoch_kl.is_empty());
        }
        assert!(model.params.all_finite());
        assert!(model.fingerprint.is_some());
    }
}

#[test]
fn single_sample_is_memorized_without_kl() {
    let set = segment_set(&[wave(2, 16, 0.4)]);
    for kind in KINDS {
        let cfg = EncoderConfig {
            kind,
            latent_dim: 4,
            model_input_len: 16,
            d_model: 16,
            n_heads: 2,
            patch_len: 4,
            kernel_sizes: vec![3],
            strides: vec![2],
            kl_weight: 0.0,
            lr: 3e-3,
            epochs: 500,
            batch_size: 1,
            ..EncoderConfig::default()
        };
        let (_, report) = fit(&cfg, &set).unwrap();
        let mse = report.epoch_recon.last().unwrap() / (2.0 * 16.0);
        assert!(mse < 1e-2, "{kind}: per-element MSE {mse}");
    }
}

#[test]
fn latents_are_deterministic() {
    let mut rows: Vec<_> = (0..5).map(|i| wave(2, 40, 0.7 * i as f64)).collect();
    rows.push(rows[1].clone());
    let set = segment_set(&rows);
    for kind in KINDS {
        let cfg = EncoderConfig {
            latent_dim: 32,
            ..small(kind)
        };
        let (model, _) = fit(&cfg, &set).unwrap();
        let a = extract_latents(&model, &set).unwrap();
        let b = extract_latents(&model, &set).unwrap();
        assert_eq!((a.rows(), a.dim), (6, 32));
        assert_eq!(a.to_bytes(), b.to_bytes(), "{kind}");
        assert_eq!(a.row(1), a.row(5), "{kind}");
        assert_eq!(a.segment_ids, set.ids().collect::<Vec<_>>());

        // inference is independent of batch composition and order
        let mut shuffled = set.clone();
        shuffled.segments.reverse();
        let c = extract_latents(&model, &shuffled).unwrap();
        for (i, id) in c.segment_ids.iter().enumerate() {
            assert_eq!(c.row(i), a.row(a.index_of(id).unwrap()), "{kind} {id}");
        }
    }
}

#[test]
fn repeated_training_is_bit_identical() {
    let set = toy_set(7, 2);
    for kind in KINDS {
        let (m1, r1) = fit(&small(kind), &set).unwrap();
        let (m2, r2) = fit(&small(kind), &set).unwrap();
        assert!(same_params(&m1, &m2), "{kind}");
        assert_eq!(r1.epoch_loss, r2.epoch_loss);
    }
}

/// Forward pass of the convolutional encoder's μ head written out with
/// plain loops over the stored parameters.
fn conv_mu_oracle(model: &TrainedModel, x: &[f64]) -> Vec<f64> {
    let cfg = &model.config;
    let mut h = x.to_vec();
    let mut len = cfg.model_input_len;
    for (i, l) in cfg.conv_layers(model.channels).unwrap().iter().enumerate() {
        let w = model.params.get(&format!("enc{i}.w")).unwrap().data();
        let b = model.params.get(&format!("enc{i}.b")).unwrap().data();
        let out_len = (len - l.kernel) / l.stride + 1;
        let mut y = vec![0.0; l.out_ch * out_len];
        for o in 0..l.out_ch {
            for t in 0..out_len {
                let mut s = b[o];
                for c in 0..l.in_ch {
                    for k in 0..l.kernel {
                        s += w[(o * l.in_ch + c) * l.kernel + k] * h[c * len + t * l.stride + k];
                    }
                }
                y[o * out_len + t] = s.max(0.0);
            }
        }
        h = y;
        len = out_len;
    }
    let w = model.params.get("mu.w").unwrap().data();
    let b = model.params.get("mu.b").unwrap().data();
    let d = cfg.latent_dim;
    (0..d)
        .map(|j| b[j] + (0..h.len()).map(|i| h[i] * w[i * d + j]).sum::<f64>())
        .collect()
}

#[test]
fn vae_latent_is_the_mean_head() {
    let set = toy_set(5, 3);
    let cfg = EncoderConfig {
        model_input_len: 40,
        ..small(EncoderKind::VaeConv)
    };
    let (model, _) = fit(&cfg, &set).unwrap();
    let lat = extract_latents(&model, &set).unwrap();
    for (i, s) in set.segments.iter().enumerate() {
        let x: Vec<f64> = s.values.iter().flatten().copied().collect();
        let mu = conv_mu_oracle(&model, &x);
        for (got, want) in lat.row(i).iter().zip(&mu) {
            assert!((*got as f64 - want).abs() <= 1e-6 * want.abs().max(1.0), "{got} vs {want}");
        }
    }
}

#[test]
fn checkpoint_round_trip() {
    let set = toy_set(5, 2);
    let dir = tempfile::tempdir().unwrap();
    for kind in KINDS {
        let (model, _) = fit(&small(kind), &set).unwrap();
        let path = dir.path().join(kind.name());
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert!(same_params(&model, &back));
        assert_eq!(back.config, model.config);
        assert_eq!(back.fingerprint, model.fingerprint);
        assert_eq!(
            extract_latents(&model, &set).unwrap().to_bytes(),
            extract_latents(&back, &set).unwrap().to_bytes()
        );
    }
}

#[test]
fn truncated_checkpoint_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let model = build_model(&small(EncoderKind::Tft), 2).unwrap();
    save_checkpoint(&model, dir.path()).unwrap();
    let p = dir.path().join("params.bin");
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(EncoderError::InvalidCheckpoint(_))));
}
