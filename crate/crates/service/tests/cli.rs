mod common;

use clap::Parser;
use latscape_encoders::LatentMatrix;
use latscape_service::cli::{execute, Cli, FileConfig};
use latscape_service::Store;
use serde_json::{json, Value};

fn run(args: &[&str]) -> Option<String> {
    let mut full = vec!["latscape"];
    full.extend_from_slice(args);
    execute(Cli::try_parse_from(full).unwrap()).unwrap()
}

fn config_file(dir: &std::path::Path) -> String {
    let cfg = json!({
        "synth": common::small_spec(3),
        "encoder": common::fast_encoder(latscape_encoders::EncoderKind::Tft),
        "projection": {"n_iter": 250},
        "cluster": {"min_pts": 3},
    });
    let p = dir.join("cfg.json");
    std::fs::write(&p, cfg.to_string()).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn stagewise_commands_complete_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("store");
    let out = out.to_str().unwrap();
    let cfg = config_file(dir.path());
    let common = ["--out", out, "--config", &cfg];

    let ds: Value = serde_json::from_str(&run(&[&common[..], &["synth", "--name", "s"]].concat()).unwrap()).unwrap();
    assert_eq!(ds["n_segments"], 24);

    let m: Value =
        serde_json::from_str(&run(&[&common[..], &["train", "--dataset", "s", "--kind", "vae_conv"]].concat()).unwrap())
            .unwrap();
    assert_eq!(m["status"], "pending");
    assert_eq!(m["encoder"]["kind"], "vae_conv");
    let id = m["run_id"].as_str().unwrap().to_string();
    for stage in ["project", "cluster"] {
        run(&[&common[..], &[stage, &id]].concat());
    }
    let m: Value = serde_json::from_str(&run(&[&common[..], &["validate", &id]].concat()).unwrap()).unwrap();
    assert_eq!(m["status"], "complete");

    let csv = run(&[&common[..], &["export", &id]].concat()).unwrap();
    let store = Store::open(out).unwrap();
    let lat = LatentMatrix::read(&store.run_dir(&id)).unwrap();
    assert_eq!(LatentMatrix::from_csv(&csv, &lat.config_hash).unwrap().to_bytes(), lat.to_bytes());

    let target = dir.path().join("lat.json");
    let none = run(&[&common[..], &["export", &id, "--format", "json", "--output", target.to_str().unwrap()]].concat());
    assert!(none.is_none());
    let back: LatentMatrix = serde_json::from_slice(&std::fs::read(&target).unwrap()).unwrap();
    assert_eq!(back, lat);

    let one_shot: Value =
        serde_json::from_str(&run(&[&common[..], &["run", "--dataset", "s", "--kind", "vae_conv"]].concat()).unwrap())
            .unwrap();
    assert_eq!(one_shot["cached"], true);
    assert_eq!(one_shot["manifest"]["run_id"], id.as_str());

    let cmp: Value = serde_json::from_str(&run(&[&common[..], &["compare", &id, &id, "--k", "5"]].concat()).unwrap()).unwrap();
    assert_eq!(cmp["mean_agreement_percent"], 100.0);
    assert_eq!(cmp["displacement"]["mean_len"], 0.0);
}

#[test]
fn seed_flag_overrides_every_seed() {
    let cfg = FileConfig::load(None, Some(99)).unwrap();
    assert_eq!(
        [cfg.synth.seed, cfg.encoder.seed, cfg.projection.seed, cfg.cluster.seed],
        [99; 4]
    );
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    std::fs::write(&p, r#"{"encoder": {"latent_dim": 32}}"#).unwrap();
    let cfg = FileConfig::load(Some(&p), None).unwrap();
    assert_eq!(cfg.encoder.latent_dim, 32);
    assert_eq!(cfg.encoder.seed, latscape_encoders::EncoderConfig::default().seed);
    std::fs::write(&p, r#"{"encoderr": {}}"#).unwrap();
    assert!(FileConfig::load(Some(&p), None).is_err());
}

#[test]
fn bench_command_prints_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("store");
    let out = out.to_str().unwrap();
    let cfg = config_file(dir.path());
    run(&["--out", out, "--config", &cfg, "synth"]);
    let table = run(&[
        "--out", out, "--config", &cfg, "bench", "--dataset", "synth", "--kinds", "tft,vae_conv", "--dims", "4,8",
        "--epochs", "1",
    ])
    .unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "kind,latent_dim,wall_time_s,final_loss,error");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("tft,4,") && lines[4].starts_with("vae_conv,8,"));
}

#[test]
fn failing_run_command_reports_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("store");
    let out = out.to_str().unwrap();
    let cfg = config_file(dir.path());
    run(&["--out", out, "--config", &cfg, "synth"]);
    let bad = dir.path().join("bad.json");
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["projection"]["perplexity"] = json!(400.0);
    std::fs::write(&bad, v.to_string()).unwrap();
    let cli = Cli::try_parse_from(["latscape", "--out", out, "--config", bad.to_str().unwrap(), "run", "--dataset", "synth"])
        .unwrap();
    let err = execute(cli).unwrap_err().to_string();
    assert!(err.contains("failed in projection"), "{err}");
}

#[test]
fn ingest_reads_a_raw_directory() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    latscape_ingest::generate_synthetic_dataset(&common::small_spec(5), &raw).unwrap();
    let out = dir.path().join("store");
    let v: Value = serde_json::from_str(
        &run(&["--out", out.to_str().unwrap(), "ingest", raw.to_str().unwrap(), "--name", "mine"]).unwrap(),
    )
    .unwrap();
    assert_eq!(v["name"], "mine");
    assert_eq!(v["channels"], 3);
}
