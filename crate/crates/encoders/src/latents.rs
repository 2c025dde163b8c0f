use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, EncoderError, Result};

pub const LATENTS_BIN: &str = "latents.bin";
pub const LATENTS_META: &str = "latents.meta.json";

/// `n × D` embeddings stored row-major as 32-bit floats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentMatrix {
    pub segment_ids: Vec<String>,
    pub dim: usize,
    pub values: Vec<f32>,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LatentMeta {
    segment_ids: Vec<String>,
    dim: usize,
    config_hash: String,
}

impl LatentMatrix {
    pub fn new(segment_ids: Vec<String>, dim: usize, values: Vec<f32>, config_hash: String) -> Result<Self> {
        if dim == 0 || values.len() != segment_ids.len() * dim {
            return Err(EncoderError::InvalidLatents(format!(
                "{} values for {} rows of dimension {dim}",
                values.len(),
                segment_ids.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EncoderError::InvalidLatents("non-finite latent value".into()));
        }
        Ok(Self {
            segment_ids,
            dim,
            values,
            config_hash,
        })
    }

    pub fn rows(&self) -> usize {
        self.segment_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.segment_ids.iter().position(|s| s == id)
    }

    /// Rows widened to `f64`.
    pub fn to_rows_f64(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|i| self.row(i).iter().map(|&v| v as f64).collect())
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let bin = dir.join(LATENTS_BIN);
        fs::write(&bin, self.to_bytes()).map_err(io_err(&bin))?;
        let meta = LatentMeta {
            segment_ids: self.segment_ids.clone(),
            dim: self.dim,
            config_hash: self.config_hash.clone(),
        };
        let mp = dir.join(LATENTS_META);
        fs::write(&mp, serde_json::to_vec_pretty(&meta)?).map_err(io_err(&mp))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let bin_path = dir.join(LATENTS_BIN);
        let bin = fs::read(&bin_path).map_err(io_err(&bin_path))?;
        let mp = dir.join(LATENTS_META);
        let meta: LatentMeta = serde_json::from_slice(&fs::read(&mp).map_err(io_err(&mp))?)?;
        if bin.len() % 4 != 0 {
            return Err(EncoderError::InvalidLatents(format!("{LATENTS_BIN} length not a multiple of 4")));
        }
        let values = bin
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Self::new(meta.segment_ids, meta.dim, values, meta.config_hash)
    }

    /// `segment_id,dim_0,…,dim_{D−1}`; shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("segment_id");
        for j in 0..self.dim {
            out.push_str(&format!(",dim_{j}"));
        }
        out.push('\n');
        for (i, id) in self.segment_ids.iter().enumerate() {
            out.push_str(id);
            for v in self.row(i) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, config_hash: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| EncoderError::InvalidLatents("empty csv".into()))?;
        let dim = header.split(',').count().saturating_sub(1);
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let mut cols = line.split(',');
            ids.push(cols.next().unwrap_or_default().to_string());
            for c in cols {
                values.push(c.parse::<f32>().map_err(|e| {
                    EncoderError::InvalidLatents(format!("row {}: `{c}`: {e}", n + 1))
                })?);
            }
        }
        Self::new(ids, dim, values, config_hash.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LatentMatrix {
        LatentMatrix::new(
            vec!["a".into(), "b".into()],
            3,
            vec![0.1, -2.5e-8, 3.0, f32::MIN_POSITIVE, 1.0 / 3.0, -7.25],
            "h".into(),
        )
        .unwrap()
    }

    #[test]
    fn disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample();
        m.write(dir.path()).unwrap();
        assert_eq!(LatentMatrix::read(dir.path()).unwrap(), m);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = sample();
        let csv = m.to_csv();
        assert!(csv.starts_with("segment_id,dim_0,dim_1,dim_2\n"));
        let back = LatentMatrix::from_csv(&csv, "h").unwrap();
        assert_eq!(back.to_bytes(), m.to_bytes());
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(LatentMatrix::new(vec!["a".into()], 2, vec![1.0], String::new()).is_err());
    }
}
