use std::fmt::Write;

use latscape_encoders::{fit, EncoderConfig, EncoderKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::store::{publish, Store};

pub const BENCH_CSV: &str = "bench.csv";
pub const BENCH_JSON: &str = "bench.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub kind: EncoderKind,
    pub latent_dim: usize,
    pub wall_time_s: Option<f64>,
    pub final_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub bench_id: String,
    pub dataset: String,
    pub dataset_fingerprint: String,
    pub epochs: usize,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn cell(&self, kind: EncoderKind, latent_dim: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.kind == kind && r.latent_dim == latent_dim)
    }

    /// `kind,latent_dim,wall_time_s,final_loss,error`; failed cells leave
    /// the numbers empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,latent_dim,wall_time_s,final_loss,error\n");
        let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let err = r.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
            let err = if err.contains(',') { format!("\"{err}\"") } else { err };
            writeln!(
                out,
                "{},{},{},{},{}",
                r.kind,
                r.latent_dim,
                num(r.wall_time_s),
                num(r.final_loss),
                err
            )
            .unwrap();
        }
        out
    }
}

impl Store {
    /// Trains every (kind, D) pair with `base`'s epochs and seed and
    /// tabulates training wall time and final loss. Stage errors are
    /// recorded per cell.
    pub fn run_benchmark(
        &self,
        dataset: &str,
        kinds: &[EncoderKind],
        latent_dims: &[usize],
        base: &EncoderConfig,
    ) -> Result<BenchReport> {
        let (entry, set) = self.load_segments(dataset)?;
        let key = serde_json::json!({
            "dataset_fingerprint": entry.fingerprint,
            "kinds": kinds,
            "latent_dims": latent_dims,
            "base": base,
        });
        let bench_id = hex::encode(&Sha256::digest(serde_json::to_vec(&key)?)[..8]);
        let mut rows = Vec::with_capacity(kinds.len() * latent_dims.len());
        for &kind in kinds {
            for &latent_dim in latent_dims {
                let cfg = EncoderConfig {
                    kind,
                    latent_dim,
                    ..base.clone()
                };
                log::info!("bench: {kind} D = {latent_dim}");
                rows.push(match fit(&cfg, &set) {
                    Ok((_, report)) => BenchRow {
                        kind,
                        latent_dim,
                        wall_time_s: Some(report.wall_time_s),
                        final_loss: report.epoch_loss.last().copied(),
                        error: None,
                    },
                    Err(e) => BenchRow {
                        kind,
                        latent_dim,
                        wall_time_s: None,
                        final_loss: None,
                        error: Some(e.to_string()),
                    },
                });
            }
        }
        let report = BenchReport {
            bench_id,
            dataset: dataset.to_string(),
            dataset_fingerprint: entry.fingerprint,
            epochs: base.epochs,
            seed: base.seed,
            rows,
        };
        publish(&self.bench_dir(&report.bench_id), |tmp| {
            crate::store::write_atomic(&tmp.join(BENCH_CSV), report.to_csv().as_bytes())?;
            crate::store::write_json_atomic(&tmp.join(BENCH_JSON), &report)
        })?;
        Ok(report)
    }
}
