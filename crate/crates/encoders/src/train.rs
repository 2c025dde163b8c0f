use std::time::Instant;

use latscape_autodiff::{AdamConfig, AdamState, Tape};
use latscape_ingest::{fingerprint, resample_linear, SegmentSet};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{EncoderError, Result};
use crate::latents::LatentMatrix;
use crate::model::{build_model, Batch, TrainedModel};
use crate::config::EncoderConfig;

/// Floating-point slack below zero tolerated for the KL term.
const KL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// mean per-sample loss of each epoch
    pub epoch_loss: Vec<f64>,
    pub epoch_recon: Vec<f64>,
    /// empty for the transformer
    pub epoch_kl: Vec<f64>,
    /// smallest KL value seen on any batch
    pub min_batch_kl: Option<f64>,
    pub wall_time_s: f64,
    pub epochs_completed: usize,
}

/// Resamples every segment to `len` samples, channel-major.
pub fn prepare_segments(set: &SegmentSet, len: usize) -> Result<Vec<Vec<f64>>> {
    set.segments
        .iter()
        .map(|s| {
            let mut row = Vec::with_capacity(s.values.len() * len);
            for ch in &s.values {
                let r = resample_linear(ch, set.seg_len as f64, len as f64)?;
                row.extend_from_slice(&r[..len]);
            }
            Ok(row)
        })
        .collect()
}

fn check_set(model: &TrainedModel, set: &SegmentSet) -> Result<()> {
    if set.is_empty() {
        return Err(EncoderError::EmptyDataset);
    }
    if set.channels() != model.channels {
        return Err(EncoderError::ChannelMismatch {
            expected: model.channels,
            got: set.channels(),
        });
    }
    Ok(())
}

/// Trains with Adam on shuffled mini-batches. Parameters are rounded to
/// 32-bit precision afterwards so that checkpoints reload exactly.
pub fn train(model: TrainedModel, set: &SegmentSet) -> Result<(TrainedModel, TrainReport)> {
    check_set(&model, set)?;
    let data = prepare_segments(set, model.config.model_input_len)?;
    let (mut model, report) = train_rows(model, &data)?;
    model.fingerprint = Some(fingerprint(set)?);
    Ok((model, report))
}

/// Builds and trains a model in one call.
pub fn fit(config: &EncoderConfig, set: &SegmentSet) -> Result<(TrainedModel, TrainReport)> {
    if set.is_empty() {
        return Err(EncoderError::EmptyDataset);
    }
    train(build_model(config, set.channels())?, set)
}

/// Trains on rows already resampled to the model length.
pub fn train_rows(mut model: TrainedModel, data: &[Vec<f64>]) -> Result<(TrainedModel, TrainReport)> {
    let start = Instant::now();
    let cfg = model.config.clone();
    if data.is_empty() {
        return Err(EncoderError::EmptyDataset);
    }
    let mut adam = AdamState::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    let n = data.len() as f64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum_loss, mut sum_recon, mut sum_kl) = (0.0, 0.0, 0.0);
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Batch {
                rows: idx.iter().map(|&i| data[i].as_slice()).collect(),
                channels: model.channels,
                len: cfg.model_input_len,
            };
            let noise: Vec<f64> = if cfg.kind.is_vae() {
                (0..idx.len() * cfg.latent_dim)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect()
            } else {
                Vec::new()
            };
            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape);
            let g = model.train_graph(&mut tape, &bound, &batch, &noise)?;
            let loss = tape.value(g.total).item().unwrap_or(f64::NAN);
            if !loss.is_finite() {
                return Err(EncoderError::NonFiniteLoss { epoch, batch: bi });
            }
            let w = idx.len() as f64;
            sum_loss += loss * w;
            sum_recon += tape.value(g.recon).item().unwrap_or(f64::NAN) * w;
            if let Some(kl_var) = g.kl {
                let kl = tape.value(kl_var).item().unwrap_or(f64::NAN);
                if kl < -KL_TOLERANCE {
                    return Err(EncoderError::NegativeKl {
                        epoch,
                        batch: bi,
                        value: kl,
                    });
                }
                report.min_batch_kl = Some(report.min_batch_kl.map_or(kl, |m: f64| m.min(kl)));
                sum_kl += kl * w;
            }
            let mut grads = tape.backward(g.total)?;
            let grads = bound.gradients(&mut grads);
            adam.step(&mut model.params, &grads)?;
        }
        report.epoch_loss.push(sum_loss / n);
        report.epoch_recon.push(sum_recon / n);
        if cfg.kind.is_vae() {
            report.epoch_kl.push(sum_kl / n);
        }
        report.epochs_completed += 1;
    }
    model.params.round_to_f32();
    if !model.params.all_finite() {
        return Err(EncoderError::NonFiniteLoss {
            epoch: cfg.epochs,
            batch: 0,
        });
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((model, report))
}

/// Deterministic embeddings in segment order (μ for the VAEs).
pub fn extract_latents(model: &TrainedModel, set: &SegmentSet) -> Result<LatentMatrix> {
    check_set(model, set)?;
    let data = prepare_segments(set, model.config.model_input_len)?;
    let ids = set.ids().map(str::to_string).collect();
    extract_rows(model, &data, ids)
}

pub fn extract_rows(model: &TrainedModel, data: &[Vec<f64>], segment_ids: Vec<String>) -> Result<LatentMatrix> {
    let cfg = &model.config;
    let mut values = Vec::with_capacity(data.len() * cfg.latent_dim);
    for chunk in data.chunks(cfg.batch_size) {
        let batch = Batch {
            rows: chunk.iter().map(Vec::as_slice).collect(),
            channels: model.channels,
            len: cfg.model_input_len,
        };
        let mut tape = Tape::new();
        let bound = model.params.bind_frozen(&mut tape);
        let z = model.encode(&mut tape, &bound, &batch)?;
        values.extend(tape.value(z).data().iter().map(|&v| v as f32));
    }
    LatentMatrix::new(segment_ids, cfg.latent_dim, values, cfg.hash())
}
