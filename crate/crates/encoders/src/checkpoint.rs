//! `params.bin`: `u32` tensor count, then per tensor a `u32` name length,
//! the UTF-8 name, a `u32` rank, `u32` dims and little-endian `f32` values.
//! `config.json` carries the config, channel count and data fingerprint.

use std::fs;
use std::path::Path;

use latscape_autodiff::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::EncoderConfig;
use crate::error::{io_err, EncoderError, Result};
use crate::model::TrainedModel;

pub const PARAMS_BIN: &str = "params.bin";
pub const CONFIG_JSON: &str = "config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CheckpointMeta {
    config: EncoderConfig,
    channels: usize,
    fingerprint: Option<String>,
}

pub fn encode_params(params: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend((params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend((name.len() as u32).to_le_bytes());
        out.extend(name.as_bytes());
        out.extend((t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend((d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend((v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| EncoderError::InvalidCheckpoint("truncated params".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_params(buf: &[u8]) -> Result<ParamStore> {
    let mut r = Reader { buf, pos: 0 };
    let count = r.u32()?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| EncoderError::InvalidCheckpoint(e.to_string()))?
            .to_string();
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = r
            .take(n * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| EncoderError::InvalidCheckpoint(format!("{name}: {e}")))?;
        params.insert(name, t);
    }
    if r.pos != buf.len() {
        return Err(EncoderError::InvalidCheckpoint("trailing bytes".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(model: &TrainedModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = dir.join(PARAMS_BIN);
    fs::write(&p, encode_params(&model.params)).map_err(io_err(&p))?;
    let meta = CheckpointMeta {
        config: model.config.clone(),
        channels: model.channels,
        fingerprint: model.fingerprint.clone(),
    };
    let c = dir.join(CONFIG_JSON);
    fs::write(&c, serde_json::to_vec_pretty(&meta)?).map_err(io_err(&c))?;
    Ok(())
}

/// Loads a checkpoint and checks that every expected tensor is present
/// with the expected shape.
pub fn load_checkpoint(dir: &Path) -> Result<TrainedModel> {
    let c = dir.join(CONFIG_JSON);
    let meta: CheckpointMeta = serde_json::from_slice(&fs::read(&c).map_err(io_err(&c))?)?;
    let p = dir.join(PARAMS_BIN);
    let params = decode_params(&fs::read(&p).map_err(io_err(&p))?)?;
    let reference = crate::model::build_model(&meta.config, meta.channels)?;
    if reference.params.len() != params.len() {
        return Err(EncoderError::InvalidCheckpoint(format!(
            "expected {} tensors, found {}",
            reference.params.len(),
            params.len()
        )));
    }
    for (name, t) in reference.params.iter() {
        let got = params
            .get(name)
            .map_err(|_| EncoderError::InvalidCheckpoint(format!("missing tensor `{name}`")))?;
        if got.shape() != t.shape() {
            return Err(EncoderError::InvalidCheckpoint(format!(
                "`{name}` has shape {:?}, expected {:?}",
                got.shape(),
                t.shape()
            )));
        }
    }
    if !params.all_finite() {
        return Err(EncoderError::InvalidCheckpoint("non-finite parameter".into()));
    }
    Ok(TrainedModel {
        config: meta.config,
        channels: meta.channels,
        params,
        fingerprint: meta.fingerprint,
    })
}
