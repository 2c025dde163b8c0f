use latscape_autodiff::{uniform_fan_in, BoundParams, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{EncoderConfig, EncoderKind};
use crate::error::{EncoderError, Result};
use crate::loss::{recon_loss, reparameterize, vae_loss};

/// Model parameters plus the shape and data they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub config: EncoderConfig,
    pub channels: usize,
    pub params: ParamStore,
    /// fingerprint of the SegmentSet the model was trained on
    pub fingerprint: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputShape {
    pub channels: usize,
    pub len: usize,
}

impl TrainedModel {
    pub fn input_shape(&self) -> InputShape {
        InputShape {
            channels: self.channels,
            len: self.config.model_input_len,
        }
    }
}

/// Initializes a model with fan-in uniform weights drawn from `config.seed`.
pub fn build_model(config: &EncoderConfig, channels: usize) -> Result<TrainedModel> {
    config.validate(channels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut p = ParamStore::new();
    let c = channels;
    let t = config.model_input_len;
    let d = config.d_model;
    let latent = config.latent_dim;
    match config.kind {
        EncoderKind::Tft => {
            let token = c * config.patch_len;
            dense_params(&mut p, &mut rng, "in", token, d);
            for l in 0..config.n_layers {
                let blk = format!("blk{l}");
                layer_norm_params(&mut p, &format!("{blk}.ln1"), d);
                for w in ["wq", "wk", "wv", "wo"] {
                    p.insert(format!("{blk}.attn.{w}"), uniform_fan_in(&mut rng, &[d, d], d));
                }
                layer_norm_params(&mut p, &format!("{blk}.ln2"), d);
                dense_params(&mut p, &mut rng, &format!("{blk}.ff1"), d, 4 * d);
                dense_params(&mut p, &mut rng, &format!("{blk}.ff2"), 4 * d, d);
            }
            layer_norm_params(&mut p, "ln_f", d);
            dense_params(&mut p, &mut rng, "emb", d, latent);
            dense_params(&mut p, &mut rng, "rec", latent, t * c);
        }
        EncoderKind::VaeConv => {
            let layers = config.conv_layers(c)?;
            for (i, l) in layers.iter().enumerate() {
                let fan_in = l.in_ch * l.kernel;
                p.insert(format!("enc{i}.w"), uniform_fan_in(&mut rng, &[l.out_ch, l.in_ch, l.kernel], fan_in));
                p.insert(format!("enc{i}.b"), uniform_fan_in(&mut rng, &[l.out_ch], fan_in));
            }
            let last = layers.last().expect("validated");
            let flat = last.out_ch * last.out_len;
            dense_params(&mut p, &mut rng, "mu", flat, latent);
            dense_params(&mut p, &mut rng, "logvar", flat, latent);
            dense_params(&mut p, &mut rng, "dec_in", latent, flat);
            for (i, l) in layers.iter().enumerate() {
                // dec{i} inverts enc{i}: out_ch → in_ch
                let fan_in = l.out_ch * l.kernel;
                p.insert(format!("dec{i}.w"), uniform_fan_in(&mut rng, &[l.out_ch, l.in_ch, l.kernel], fan_in));
                p.insert(format!("dec{i}.b"), uniform_fan_in(&mut rng, &[l.in_ch], fan_in));
            }
        }
        EncoderKind::VaeLstm => {
            let h = d / 2;
            for l in 0..config.n_layers {
                let input = if l == 0 { c } else { d };
                for dir in ["fw", "bw"] {
                    lstm_params(&mut p, &mut rng, &format!("enc{l}.{dir}"), input, h);
                }
            }
            dense_params(&mut p, &mut rng, "mu", t * d, latent);
            dense_params(&mut p, &mut rng, "logvar", t * d, latent);
            dense_params(&mut p, &mut rng, "dec.seed", latent, 2 * d);
            lstm_params(&mut p, &mut rng, "dec.lstm", latent + d, d);
            dense_params(&mut p, &mut rng, "dec.out", d, c);
        }
    }
    Ok(TrainedModel {
        config: config.clone(),
        channels,
        params: p,
        fingerprint: None,
    })
}

fn dense_params(p: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize) {
    p.insert(format!("{name}.w"), uniform_fan_in(rng, &[fan_in, fan_out], fan_in));
    p.insert(format!("{name}.b"), uniform_fan_in(rng, &[fan_out], fan_in));
}

fn layer_norm_params(p: &mut ParamStore, name: &str, d: usize) {
    p.insert(format!("{name}.g"), Tensor::full([d], 1.0));
    p.insert(format!("{name}.b"), Tensor::zeros([d]));
}

fn lstm_params(p: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize, hidden: usize) {
    p.insert(format!("{name}.w_ih"), uniform_fan_in(rng, &[input, 4 * hidden], hidden));
    p.insert(format!("{name}.w_hh"), uniform_fan_in(rng, &[hidden, 4 * hidden], hidden));
    let mut b = uniform_fan_in(rng, &[4 * hidden], hidden);
    // gate order [input, forget, cell, output]
    b.data_mut()[hidden..2 * hidden].fill(1.0);
    p.insert(format!("{name}.b"), b);
}

/// A batch of segments already resampled to `T_model`, each stored
/// channel-major (`[c][t]`).
#[derive(Clone, Debug)]
pub struct Batch<'a> {
    pub rows: Vec<&'a [f64]>,
    pub channels: usize,
    pub len: usize,
}

impl Batch<'_> {
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    /// `[B, C, T]`
    fn channel_major(&self) -> Tensor {
        let data = self.rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::new([self.size(), self.channels, self.len], data).expect("batch shape")
    }

    /// `[B, T·C]` laid out time-major.
    fn time_major(&self) -> Tensor {
        let (c, t) = (self.channels, self.len);
        let mut data = Vec::with_capacity(self.size() * c * t);
        for r in &self.rows {
            for j in 0..t {
                data.extend((0..c).map(|ch| r[ch * t + j]));
            }
        }
        Tensor::new([self.size(), t * c], data).expect("batch shape")
    }

    /// `[B, T / P, C·P]`: token `k` holds every channel's samples
    /// `k·P .. (k+1)·P`.
    fn patches(&self, patch: usize) -> Tensor {
        let (c, t) = (self.channels, self.len);
        let tokens = t / patch;
        let mut data = Vec::with_capacity(self.size() * c * t);
        for r in &self.rows {
            for k in 0..tokens {
                for ch in 0..c {
                    data.extend_from_slice(&r[ch * t + k * patch..ch * t + (k + 1) * patch]);
                }
            }
        }
        Tensor::new([self.size(), tokens, c * patch], data).expect("batch shape")
    }

    /// One `[B, C]` tensor per time step.
    fn steps(&self) -> Vec<Tensor> {
        let (c, t) = (self.channels, self.len);
        (0..t)
            .map(|j| {
                let data = self
                    .rows
                    .iter()
                    .flat_map(|r| (0..c).map(move |ch| r[ch * t + j]))
                    .collect();
                Tensor::new([self.size(), c], data).expect("batch shape")
            })
            .collect()
    }
}

/// Loss nodes for one training batch.
#[derive(Clone, Copy, Debug)]
pub struct TrainGraph {
    pub total: Var,
    pub recon: Var,
    pub kl: Option<Var>,
}

fn dense(tape: &mut Tape, p: &BoundParams, name: &str, x: Var) -> Result<Var> {
    let w = p.var(&format!("{name}.w"))?;
    let b = p.var(&format!("{name}.b"))?;
    let y = tape.matmul(x, w)?;
    Ok(tape.add(y, b)?)
}

fn layer_norm(tape: &mut Tape, p: &BoundParams, name: &str, x: Var) -> Result<Var> {
    let g = p.var(&format!("{name}.g"))?;
    let b = p.var(&format!("{name}.b"))?;
    Ok(tape.layer_norm(x, g, b)?)
}

/// Sinusoidal position table tiled over the batch, `[B, T, d]`.
pub fn positional_encoding(batch: usize, len: usize, d: usize) -> Tensor {
    let mut row = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d {
            let freq = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let a = pos as f64 * freq;
            row[pos * d + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    let data = row.iter().copied().cycle().take(batch * len * d).collect();
    Tensor::new([batch, len, d], data).expect("pe shape")
}

impl TrainedModel {
    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.channels != self.channels {
            return Err(EncoderError::ChannelMismatch {
                expected: self.channels,
                got: batch.channels,
            });
        }
        if batch.len != self.config.model_input_len || batch.rows.is_empty() {
            return Err(EncoderError::InvalidConfig(format!(
                "batch of {} rows with length {} for model length {}",
                batch.size(),
                batch.len,
                self.config.model_input_len
            )));
        }
        Ok(())
    }

    /// Deterministic embedding `[B, D]` (μ for the VAEs).
    pub fn encode(&self, tape: &mut Tape, p: &BoundParams, batch: &Batch) -> Result<Var> {
        self.check_batch(batch)?;
        Ok(match self.config.kind {
            EncoderKind::Tft => self.tft_embed(tape, p, batch)?,
            EncoderKind::VaeConv => self.conv_encode(tape, p, batch)?.0,
            EncoderKind::VaeLstm => self.lstm_encode(tape, p, batch)?.0,
        })
    }

    /// Builds the training loss. `noise` (`B × D`, row-major) feeds the
    /// reparameterization and is ignored by the transformer.
    pub fn train_graph(&self, tape: &mut Tape, p: &BoundParams, batch: &Batch, noise: &[f64]) -> Result<TrainGraph> {
        self.check_batch(batch)?;
        let b = batch.size();
        let latent = self.config.latent_dim;
        let noise_var = |tape: &mut Tape| -> Result<Var> {
            Ok(tape.constant(Tensor::new([b, latent], noise.to_vec())?))
        };
        match self.config.kind {
            EncoderKind::Tft => {
                let z = self.tft_embed(tape, p, batch)?;
                let recon = dense(tape, p, "rec", z)?;
                let target = tape.constant(channel_flat(batch));
                let l = recon_loss(tape, recon, target)?;
                Ok(TrainGraph {
                    total: l,
                    recon: l,
                    kl: None,
                })
            }
            EncoderKind::VaeConv => {
                let (mu, logvar) = self.conv_encode(tape, p, batch)?;
                let eps = noise_var(tape)?;
                let z = reparameterize(tape, mu, logvar, eps)?;
                let recon = self.conv_decode(tape, p, z, b)?;
                let target = tape.constant(batch.channel_major());
                let l = vae_loss(tape, recon, target, mu, logvar, self.config.kl_weight)?;
                Ok(TrainGraph {
                    total: l.total,
                    recon: l.recon,
                    kl: Some(l.kl),
                })
            }
            EncoderKind::VaeLstm => {
                let (mu, logvar) = self.lstm_encode(tape, p, batch)?;
                let eps = noise_var(tape)?;
                let z = reparameterize(tape, mu, logvar, eps)?;
                let recon = self.lstm_decode(tape, p, z, b)?;
                let target = tape.constant(batch.time_major());
                let l = vae_loss(tape, recon, target, mu, logvar, self.config.kl_weight)?;
                Ok(TrainGraph {
                    total: l.total,
                    recon: l.recon,
                    kl: Some(l.kl),
                })
            }
        }
    }

    fn tft_embed(&self, tape: &mut Tape, p: &BoundParams, batch: &Batch) -> Result<Var> {
        let cfg = &self.config;
        let tokens = cfg.model_input_len / cfg.patch_len;
        let x = tape.constant(batch.patches(cfg.patch_len));
        let mut h = dense(tape, p, "in", x)?;
        let pe = tape.constant(positional_encoding(batch.size(), tokens, cfg.d_model));
        h = tape.add(h, pe)?;
        for l in 0..cfg.n_layers {
            let blk = format!("blk{l}");
            let n1 = layer_norm(tape, p, &format!("{blk}.ln1"), h)?;
            let w = |n: &str| p.var(&format!("{blk}.attn.{n}"));
            let a = tape.multi_head_attention(n1, w("wq")?, w("wk")?, w("wv")?, w("wo")?, cfg.n_heads)?;
            h = tape.add(h, a)?;
            let n2 = layer_norm(tape, p, &format!("{blk}.ln2"), h)?;
            let f = dense(tape, p, &format!("{blk}.ff1"), n2)?;
            let f = tape.relu(f);
            let f = dense(tape, p, &format!("{blk}.ff2"), f)?;
            h = tape.add(h, f)?;
        }
        let h = layer_norm(tape, p, "ln_f", h)?;
        let pooled = tape.mean_pool_time(h)?;
        dense(tape, p, "emb", pooled)
    }

    fn conv_encode(&self, tape: &mut Tape, p: &BoundParams, batch: &Batch) -> Result<(Var, Var)> {
        let layers = self.config.conv_layers(self.channels)?;
        let mut h = tape.constant(batch.channel_major());
        for (i, l) in layers.iter().enumerate() {
            let w = p.var(&format!("enc{i}.w"))?;
            let b = p.var(&format!("enc{i}.b"))?;
            h = tape.conv1d(h, w, Some(b), l.stride, l.padding)?;
            h = tape.relu(h);
        }
        let last = layers.last().expect("validated");
        let flat = tape.reshape(h, &[batch.size(), last.out_ch * last.out_len])?;
        let mu = dense(tape, p, "mu", flat)?;
        let logvar = dense(tape, p, "logvar", flat)?;
        Ok((mu, logvar))
    }

    fn conv_decode(&self, tape: &mut Tape, p: &BoundParams, z: Var, b: usize) -> Result<Var> {
        let layers = self.config.conv_layers(self.channels)?;
        let last = layers.last().expect("validated");
        let h = dense(tape, p, "dec_in", z)?;
        let h = tape.relu(h);
        let mut h = tape.reshape(h, &[b, last.out_ch, last.out_len])?;
        for (i, l) in layers.iter().enumerate().rev() {
            let w = p.var(&format!("dec{i}.w"))?;
            let bias = p.var(&format!("dec{i}.b"))?;
            h = tape.conv1d_transpose(h, w, Some(bias), l.stride, l.padding, l.output_padding)?;
            if i > 0 {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    fn lstm_run(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        name: &str,
        inputs: &[Var],
        init: Option<(Var, Var)>,
        reverse: bool,
        hidden: usize,
    ) -> Result<Vec<Var>> {
        let b = tape.shape(inputs[0])[0];
        let (mut h, mut c) = match init {
            Some(hc) => hc,
            None => {
                let z = tape.constant(Tensor::zeros([b, hidden]));
                (z, z)
            }
        };
        let w_ih = p.var(&format!("{name}.w_ih"))?;
        let w_hh = p.var(&format!("{name}.w_hh"))?;
        let bias = p.var(&format!("{name}.b"))?;
        let mut out = vec![h; inputs.len()];
        let order: Vec<usize> = if reverse {
            (0..inputs.len()).rev().collect()
        } else {
            (0..inputs.len()).collect()
        };
        for t in order {
            let hc = tape.lstm_cell(inputs[t], h, c, w_ih, w_hh, bias)?;
            h = tape.slice(hc, 1, 0, hidden)?;
            c = tape.slice(hc, 1, hidden, 2 * hidden)?;
            out[t] = h;
        }
        Ok(out)
    }

    fn lstm_encode(&self, tape: &mut Tape, p: &BoundParams, batch: &Batch) -> Result<(Var, Var)> {
        let cfg = &self.config;
        let h = cfg.d_model / 2;
        let mut seq: Vec<Var> = batch.steps().into_iter().map(|s| tape.constant(s)).collect();
        for l in 0..cfg.n_layers {
            let fw = self.lstm_run(tape, p, &format!("enc{l}.fw"), &seq, None, false, h)?;
            let bw = self.lstm_run(tape, p, &format!("enc{l}.bw"), &seq, None, true, h)?;
            seq = fw
                .iter()
                .zip(&bw)
                .map(|(&f, &b)| tape.concat(&[f, b], 1))
                .collect::<latscape_autodiff::Result<_>>()?;
        }
        let flat = tape.concat(&seq, 1)?;
        let mu = dense(tape, p, "mu", flat)?;
        let logvar = dense(tape, p, "logvar", flat)?;
        Ok((mu, logvar))
    }

    fn lstm_decode(&self, tape: &mut Tape, p: &BoundParams, z: Var, b: usize) -> Result<Var> {
        let cfg = &self.config;
        let d = cfg.d_model;
        let seed = dense(tape, p, "dec.seed", z)?;
        let seed = tape.tanh(seed);
        let h0 = tape.slice(seed, 1, 0, d)?;
        let c0 = tape.slice(seed, 1, d, 2 * d)?;
        let pe = positional_encoding(b, cfg.model_input_len, d);
        let inputs = (0..cfg.model_input_len)
            .map(|t| {
                let row: Vec<f64> = (0..b)
                    .flat_map(|i| pe.data()[(i * cfg.model_input_len + t) * d..][..d].iter().copied())
                    .collect();
                let pe_t = tape.constant(Tensor::new([b, d], row).expect("pe row"));
                tape.concat(&[z, pe_t], 1)
            })
            .collect::<latscape_autodiff::Result<Vec<_>>>()?;
        let hs = self.lstm_run(tape, p, "dec.lstm", &inputs, Some((h0, c0)), false, d)?;
        let hs = tape.concat(&hs, 1)?;
        let hs = tape.reshape(hs, &[b, cfg.model_input_len, d])?;
        let y = dense(tape, p, "dec.out", hs)?;
        Ok(tape.reshape(y, &[b, cfg.model_input_len * self.channels])?)
    }
}

/// `[B, C·T]` in the stored channel-major order.
fn channel_flat(batch: &Batch) -> Tensor {
    let data = batch.rows.iter().flat_map(|r| r.iter().copied()).collect();
    Tensor::new([batch.size(), batch.channels * batch.len], data).expect("batch shape")
}
