use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EncoderError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Tft,
    VaeConv,
    VaeLstm,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 3] = [EncoderKind::Tft, EncoderKind::VaeConv, EncoderKind::VaeLstm];

    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Tft => "tft",
            EncoderKind::VaeConv => "vae_conv",
            EncoderKind::VaeLstm => "vae_lstm",
        }
    }

    pub fn is_vae(self) -> bool {
        self != EncoderKind::Tft
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderKind {
    type Err = EncoderError;

    fn from_str(s: &str) -> Result<Self> {
        EncoderKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| EncoderError::InvalidConfig(format!("unknown encoder kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub latent_dim: usize,
    /// segments are linearly resampled to this many samples
    pub model_input_len: usize,
    pub d_model: usize,
    pub n_layers: usize,
    /// tft only
    pub n_heads: usize,
    /// tft only: time steps folded into one token
    pub patch_len: usize,
    /// vae_conv only
    pub kernel_sizes: Vec<usize>,
    /// vae_conv only
    pub strides: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub kl_weight: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Tft,
            latent_dim: 8,
            model_input_len: 512,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            patch_len: 16,
            kernel_sizes: vec![7, 5, 3],
            strides: vec![4, 4, 2],
            lr: 1e-3,
            epochs: 50,
            batch_size: 32,
            kl_weight: 1.0,
            seed: 42,
        }
    }
}

/// Length bookkeeping for one convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_len: usize,
    pub out_len: usize,
    /// restores `in_len` in the mirrored transposed convolution
    pub output_padding: usize,
}

impl EncoderConfig {
    pub fn with_kind(kind: EncoderKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self, channels: usize) -> Result<()> {
        let bad = |m: String| Err(EncoderError::InvalidConfig(m));
        if channels == 0 {
            return bad("channel count must be positive".into());
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1".into());
        }
        if self.model_input_len < 8 {
            return bad(format!("model_input_len must be at least 8, got {}", self.model_input_len));
        }
        if self.d_model == 0 || self.n_layers == 0 || self.batch_size == 0 {
            return bad("d_model, n_layers and batch_size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return bad(format!("kl_weight must be nonnegative, got {}", self.kl_weight));
        }
        match self.kind {
            EncoderKind::Tft => {
                if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
                    return bad(format!(
                        "d_model {} not divisible by n_heads {}",
                        self.d_model, self.n_heads
                    ));
                }
                if self.patch_len == 0 || self.model_input_len % self.patch_len != 0 {
                    return bad(format!(
                        "model_input_len {} not divisible by patch_len {}",
                        self.model_input_len, self.patch_len
                    ));
                }
            }
            EncoderKind::VaeConv => {
                let layers = self.conv_layers(channels)?;
                let last = layers.last().expect("at least one layer");
                self.check_width(last.out_ch * last.out_len)?;
            }
            EncoderKind::VaeLstm => {
                if self.d_model % 2 != 0 {
                    return bad(format!("d_model must be even for a bidirectional LSTM, got {}", self.d_model));
                }
                self.check_width(self.model_input_len * self.d_model)?;
            }
        }
        Ok(())
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if self.latent_dim > width {
            return Err(EncoderError::InvalidConfig(format!(
                "latent_dim {} exceeds flattened encoder width {width}",
                self.latent_dim
            )));
        }
        Ok(())
    }

    /// Unpadded encoder convolution stack; channel width doubles per layer
    /// from `d_model`.
    pub fn conv_layers(&self, channels: usize) -> Result<Vec<ConvLayer>> {
        let bad = |m: String| Err(EncoderError::InvalidConfig(m));
        if self.kernel_sizes.is_empty() || self.kernel_sizes.len() != self.strides.len() {
            return bad("kernel_sizes and strides must be non-empty and of equal length".into());
        }
        let mut layers = Vec::with_capacity(self.kernel_sizes.len());
        let mut len = self.model_input_len;
        let mut in_ch = channels;
        for (i, (&k, &s)) in self.kernel_sizes.iter().zip(&self.strides).enumerate() {
            if k == 0 || s == 0 {
                return bad(format!("layer {i}: kernel and stride must be positive"));
            }
            let p = 0;
            let span = len + 2 * p;
            if span < k {
                return bad(format!("layer {i}: input length {len} too short for kernel {k}"));
            }
            let out_len = (span - k) / s + 1;
            let out_ch = self.d_model << i;
            layers.push(ConvLayer {
                in_ch,
                out_ch,
                kernel: k,
                stride: s,
                padding: p,
                in_len: len,
                out_len,
                output_padding: (span - k) % s,
            });
            len = out_len;
            in_ch = out_ch;
        }
        Ok(layers)
    }

    /// Short content hash of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}
