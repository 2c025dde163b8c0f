use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use latscape_analysis::{Alignment, ClusterParams, DEFAULT_K};
use latscape_encoders::{EncoderConfig, EncoderKind};
use latscape_ingest::synth::SPEC_FILE;
use latscape_ingest::{generate_synthetic_dataset, preprocess_dataset, ChannelSchema, PreprocessConfig, SyntheticSpec};
use latscape_projection::ProjectionConfig;
use serde::{Deserialize, Serialize};

use crate::manifest::RunSpec;
use crate::store::Store;
use crate::views::ExportFormat;

#[derive(Debug, Parser)]
#[command(name = "latscape", version, about = "Latent-space analytics for multichannel event recordings")]
pub struct Cli {
    /// JSON file with any of `synth`, `schema`, `preprocess`, `encoder`,
    /// `projection`, `cluster`
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// overrides every seed in the configuration
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// store root
    #[arg(long, global = true, default_value = "latscape-store")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub dataset: String,
    #[arg(long)]
    pub kind: Option<EncoderKind>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and register it
    Synth {
        #[arg(long, default_value = "synth")]
        name: String,
        /// where the raw records go; defaults to `<out>/raw/<name>`
        #[arg(long)]
        raw_dir: Option<PathBuf>,
    },
    /// Preprocess a directory of event files and register the segments
    Ingest {
        dir: PathBuf,
        #[arg(long)]
        name: String,
    },
    /// Create a run and train its encoder
    Train(ModelArgs),
    /// Project a trained run's latents to 2-D
    Project { run_id: String },
    /// Cluster a projected run
    Cluster { run_id: String },
    /// Validate a clustered run and mark it complete
    Validate { run_id: String },
    /// All stages in one go
    Run(ModelArgs),
    /// Agreement and correspondence of two complete runs
    Compare {
        run_a: String,
        run_b: String,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long, value_enum, default_value = "none")]
        alignment: AlignmentArg,
    },
    /// Training time and final loss over encoder kinds and latent sizes
    Bench {
        #[arg(long)]
        dataset: String,
        #[arg(long, value_delimiter = ',', default_value = "tft,vae_conv,vae_lstm")]
        kinds: Vec<EncoderKind>,
        #[arg(long, value_delimiter = ',', default_value = "8,64,256")]
        dims: Vec<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Serve the HTTP API
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// concurrent pipeline executions
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Write a run's latent matrix
    Export {
        run_id: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// stdout when absent
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum AlignmentArg {
    None,
    Procrustes,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub synth: SyntheticSpec,
    pub schema: Option<ChannelSchema>,
    pub preprocess: PreprocessConfig,
    pub encoder: EncoderConfig,
    pub projection: ProjectionConfig,
    pub cluster: ClusterParams,
}

impl FileConfig {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> anyhow::Result<Self> {
        let mut cfg: FileConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => FileConfig::default(),
        };
        if let Some(s) = seed {
            cfg.synth.seed = s;
            cfg.encoder.seed = s;
            cfg.projection.seed = s;
            cfg.cluster.seed = s;
        }
        Ok(cfg)
    }

    fn run_spec(&self, args: &ModelArgs) -> RunSpec {
        let mut encoder = self.encoder.clone();
        if let Some(k) = args.kind {
            encoder.kind = k;
        }
        if let Some(d) = args.latent_dim {
            encoder.latent_dim = d;
        }
        if let Some(e) = args.epochs {
            encoder.epochs = e;
        }
        RunSpec {
            dataset: args.dataset.clone(),
            encoder,
            projection: self.projection.clone(),
            cluster: self.cluster.clone(),
        }
    }
}

fn json<T: Serialize>(v: &T) -> anyhow::Result<Option<String>> {
    Ok(Some(serde_json::to_string_pretty(v)?))
}

/// Preprocesses `dir` and registers it as `name`. The channel schema comes
/// from the config, else from a generator spec in `dir`, else the
/// three-phase default.
pub fn ingest_dir(store: &Store, cfg: &FileConfig, dir: &Path, name: &str) -> anyhow::Result<crate::DatasetEntry> {
    let schema = match &cfg.schema {
        Some(s) => s.clone(),
        None if dir.join(SPEC_FILE).exists() => {
            let text = std::fs::read_to_string(dir.join(SPEC_FILE))?;
            serde_json::from_str::<SyntheticSpec>(&text)?.schema()
        }
        None => ChannelSchema::provider1(),
    };
    let (pre, taxonomy) = preprocess_dataset(dir, &schema, &cfg.preprocess)?;
    Ok(store.register_dataset(name, &pre.set, &taxonomy)?)
}

/// Executes one command; returns what should be printed.
pub fn execute(cli: Cli) -> anyhow::Result<Option<String>> {
    let cfg = FileConfig::load(cli.config.as_deref(), cli.seed)?;
    let store = Store::open(&cli.out)?;
    match cli.command {
        Command::Synth { name, raw_dir } => {
            let raw = raw_dir.unwrap_or_else(|| cli.out.join("raw").join(&name));
            generate_synthetic_dataset(&cfg.synth, &raw)?;
            json(&ingest_dir(&store, &cfg, &raw, &name)?)
        }
        Command::Ingest { dir, name } => json(&ingest_dir(&store, &cfg, &dir, &name)?),
        Command::Train(args) => {
            let out = store.prepare_run(&cfg.run_spec(&args))?;
            if out.cached {
                return json(&out);
            }
            json(&store.stage_train(&out.manifest.run_id)?)
        }
        Command::Project { run_id } => json(&store.stage_project(&run_id)?),
        Command::Cluster { run_id } => json(&store.stage_cluster(&run_id)?),
        Command::Validate { run_id } => json(&store.stage_validate(&run_id)?),
        Command::Run(args) => {
            let out = store.run_pipeline(&cfg.run_spec(&args))?;
            if let Some(stage) = &out.manifest.failed_stage {
                bail!(
                    "run {} failed in {stage}: {}",
                    out.manifest.run_id,
                    out.manifest.error.as_deref().unwrap_or("")
                );
            }
            json(&out)
        }
        Command::Compare {
            run_a,
            run_b,
            k,
            alignment,
        } => {
            let alignment = match alignment {
                AlignmentArg::None => Alignment::None,
                AlignmentArg::Procrustes => Alignment::Procrustes,
            };
            let c = store.compare_runs(&run_a, &run_b, k, alignment)?;
            json(&serde_json::json!({
                "run_a": c.run_a,
                "run_b": c.run_b,
                "k": c.agreement.k,
                "mean_agreement_percent": c.agreement.mean_percent,
                "displacement": c.correspondence.summary,
            }))
        }
        Command::Bench {
            dataset,
            kinds,
            dims,
            epochs,
        } => {
            let mut base = cfg.encoder.clone();
            if let Some(e) = epochs {
                base.epochs = e;
            }
            let report = store.run_benchmark(&dataset, &kinds, &dims, &base)?;
            Ok(Some(report.to_csv()))
        }
        Command::Serve { addr, workers } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::api::serve(addr, Arc::new(store), workers))?;
            Ok(None)
        }
        Command::Export { run_id, format, output } => {
            let format = match format {
                FormatArg::Csv => ExportFormat::Csv,
                FormatArg::Json => ExportFormat::Json,
            };
            let body = store.export(&run_id, format)?;
            match output {
                Some(p) => {
                    crate::store::write_atomic(&p, body.as_bytes())?;
                    Ok(None)
                }
                None => Ok(Some(body)),
            }
        }
    }
}
