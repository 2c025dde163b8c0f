mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::http::StatusCode;
use common::{call, check_endpoints, check_schema, fast_spec, get_json, register_small};
use latscape_encoders::{EncoderKind, LatentMatrix};
use latscape_service::{router, AppState, Store};
use serde_json::{json, Value};

struct Fixture {
    _dir: tempfile::TempDir,
    store: Arc<Store>,
    tft: String,
    conv: String,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path().join("store")).unwrap());
    register_small(&store, "synth", 7, dir.path());
    register_small(&store, "other", 8, dir.path());
    let tft = store.run_pipeline(&fast_spec("synth", EncoderKind::Tft)).unwrap().manifest;
    let conv = store.run_pipeline(&fast_spec("synth", EncoderKind::VaeConv)).unwrap().manifest;
    assert!(tft.is_complete() && conv.is_complete(), "{tft:?}");
    Fixture {
        _dir: dir,
        store,
        tft: tft.run_id,
        conv: conv.run_id,
    }
}

#[tokio::test]
async fn every_endpoint_matches_its_schema() {
    let f = fixture();
    let app = router(AppState::new(f.store.clone(), 1));
    let (_, v) = get_json(&app, "/datasets").await;
    assert_eq!(v.as_array().unwrap().len(), 2);
    let spec = serde_json::to_value(fast_spec("synth", EncoderKind::Tft)).unwrap();
    check_endpoints(&app, "synth", &f.tft, &f.conv, 24, spec).await;
    let (_, v) = get_json(&app, "/runs").await;
    assert_eq!(v.as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn errors_are_json_with_client_statuses() {
    let f = fixture();
    let app = router(AppState::new(f.store.clone(), 1));
    let cases = [
        ("GET", "/runs/0123456789abcdef".to_string(), None, StatusCode::NOT_FOUND),
        ("GET", "/runs/..%2F..%2Fetc".to_string(), None, StatusCode::NOT_FOUND),
        ("GET", "/runs/nope/map".to_string(), None, StatusCode::NOT_FOUND),
        ("GET", "/datasets/nope/tree".to_string(), None, StatusCode::NOT_FOUND),
        ("GET", "/no/such/route".to_string(), None, StatusCode::NOT_FOUND),
        ("GET", format!("/runs/{}/map?method=kmeans", f.tft), None, StatusCode::BAD_REQUEST),
        ("GET", format!("/runs/{}/map?k=x", f.tft), None, StatusCode::BAD_REQUEST),
        ("GET", format!("/runs/{}/export?format=xml", f.tft), None, StatusCode::BAD_REQUEST),
        ("GET", format!("/runs/{}/latents?ids=missing", f.tft), None, StatusCode::BAD_REQUEST),
        ("GET", format!("/compare/{}/{}", f.conv, f.tft), None, StatusCode::NOT_FOUND),
        ("POST", "/runs".to_string(), Some(json!({"dataset": "nope"})), StatusCode::NOT_FOUND),
        ("POST", "/runs".to_string(), Some(json!({"dataset": "synth", "x": 1})), StatusCode::BAD_REQUEST),
        ("POST", "/runs".to_string(), Some(json!([1, 2])), StatusCode::BAD_REQUEST),
        ("POST", "/compare".to_string(), Some(json!({"run_a": f.tft})), StatusCode::BAD_REQUEST),
        (
            "POST",
            "/compare".to_string(),
            Some(json!({"run_a": f.tft, "run_b": f.conv, "k": 0})),
            StatusCode::BAD_REQUEST,
        ),
    ];
    for (method, uri, body, want) in cases {
        let (s, text) = call(&app, method, &uri, body).await;
        assert_eq!(s, want, "{method} {uri}: {text}");
        check_schema("error", &serde_json::from_str(&text).unwrap());
    }
}

#[tokio::test]
async fn posted_run_goes_from_pending_to_complete() {
    let f = fixture();
    let app = router(AppState::new(f.store.clone(), 1));
    let mut spec = fast_spec("synth", EncoderKind::VaeLstm);
    spec.encoder.epochs = 20;
    let body = serde_json::to_value(&spec).unwrap();

    let (s, text) = call(&app, "POST", "/runs", Some(body.clone())).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{text}");
    let out: Value = serde_json::from_str(&text).unwrap();
    check_schema("run_outcome", &out);
    assert_eq!(out["cached"], false);
    assert_eq!(out["manifest"]["status"], "pending");
    let id = out["manifest"]["run_id"].as_str().unwrap().to_string();

    // a duplicate submission while queued is not enqueued twice
    let (s, _) = call(&app, "POST", "/runs", Some(body.clone())).await;
    assert_eq!(s, StatusCode::ACCEPTED);

    let mut seen = Vec::new();
    for _ in 0..600 {
        let (_, m) = get_json(&app, &format!("/runs/{id}")).await;
        check_schema("manifest", &m);
        let status = m["status"].as_str().unwrap().to_string();
        if seen.last() != Some(&status) {
            seen.push(status.clone());
        }
        if status != "pending" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    assert_eq!(seen, vec!["pending", "complete"]);

    let (s, text) = call(&app, "POST", "/runs", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    let again: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(again["cached"], true);
    assert_eq!(again["manifest"]["run_id"], id.as_str());
}

#[tokio::test]
async fn failed_run_reports_its_stage() {
    let f = fixture();
    let app = router(AppState::new(f.store.clone(), 1));
    let mut spec = fast_spec("synth", EncoderKind::Tft);
    spec.projection.perplexity = Some(500.0);
    let (s, text) = call(&app, "POST", "/runs", Some(serde_json::to_value(&spec).unwrap())).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let id = serde_json::from_str::<Value>(&text).unwrap()["manifest"]["run_id"]
        .as_str()
        .unwrap()
        .to_string();
    let mut m = Value::Null;
    for _ in 0..600 {
        m = get_json(&app, &format!("/runs/{id}")).await.1;
        if m["status"] != "pending" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    check_schema("manifest", &m);
    assert_eq!(m["status"], "failed");
    assert_eq!(m["failed_stage"], "projection");
    let (s, v) = get_json(&app, &format!("/runs/{id}/map")).await;
    assert_eq!(s, StatusCode::CONFLICT);
    check_schema("error", &v);
}

#[tokio::test]
async fn export_csv_round_trips_to_the_latent_file() {
    let f = fixture();
    let app = router(AppState::new(f.store.clone(), 1));
    let (_, csv) = call(&app, "GET", &format!("/runs/{}/export?format=csv", f.tft), None).await;
    let stored = LatentMatrix::read(&f.store.run_dir(&f.tft)).unwrap();
    let parsed = LatentMatrix::from_csv(&csv, &stored.config_hash).unwrap();
    assert_eq!(parsed.segment_ids, stored.segment_ids);
    assert_eq!(parsed.to_bytes(), stored.to_bytes());
    assert_eq!(parsed.to_bytes(), std::fs::read(f.store.run_dir(&f.tft).join("latents.bin")).unwrap());

    let (_, v) = get_json(&app, &format!("/runs/{}/export?format=json", f.tft)).await;
    let from_json: LatentMatrix = serde_json::from_value(v).unwrap();
    assert_eq!(from_json, stored);
}

#[tokio::test]
async fn map_and_latents_payloads_follow_the_dataset() {
    let f = fixture();
    let app = router(AppState::new(f.store.clone(), 1));
    let meta = f.store.segment_meta("synth").unwrap();
    let (_, map) = get_json(&app, &format!("/runs/{}/map", f.tft)).await;
    let clusters = f.store.clusters(&f.store.read_manifest(&f.tft).unwrap()).unwrap();
    for p in map["points"].as_array().unwrap() {
        let id = p["id"].as_str().unwrap();
        let s = meta.segments.iter().find(|s| s.segment_id == id).unwrap();
        let labels: Vec<String> = serde_json::from_value(p["labels"].clone()).unwrap();
        assert_eq!(labels, s.labels);
        assert_eq!(p["duration_s"].as_f64().unwrap(), s.event_duration_s);
        let i = clusters.segment_ids.iter().position(|x| x == id).unwrap();
        assert_eq!(p["cluster"].as_i64().unwrap(), clusters.labels[i]);
    }

    let (_, gmm) = get_json(&app, &format!("/runs/{}/map?method=gmm&k=2", f.tft)).await;
    assert_eq!(gmm["method"], "gmm");
    assert!(gmm["n_clusters"].as_u64().unwrap() <= 2);

    let ids = [&meta.segments[3].segment_id, &meta.segments[0].segment_id];
    let (_, lat) = get_json(&app, &format!("/runs/{}/latents?ids={},{}", f.tft, ids[0], ids[1])).await;
    let stored = LatentMatrix::read(&f.store.run_dir(&f.tft)).unwrap();
    let vectors = lat["vectors"].as_array().unwrap();
    assert_eq!(vectors.len(), 2);
    for (v, id) in vectors.iter().zip(ids) {
        assert_eq!(v["id"], id.as_str());
        let values: Vec<f32> = serde_json::from_value(v["values"].clone()).unwrap();
        assert_eq!(values, stored.row(stored.index_of(id).unwrap()));
    }
}

#[tokio::test]
async fn self_comparison_and_dataset_mismatch() {
    let f = fixture();
    let app = router(AppState::new(f.store.clone(), 1));
    let body = json!({"run_a": f.tft, "run_b": f.tft, "k": 5, "alignment": "procrustes"});
    let (s, text) = call(&app, "POST", "/compare", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["agreement"]["mean_percent"].as_f64().unwrap(), 100.0);
    let disp: Vec<[f64; 2]> = serde_json::from_value(v["correspondence"]["displacements"].clone()).unwrap();
    assert!(disp.iter().all(|d| d[0].abs() < 1e-9 && d[1].abs() < 1e-9));

    let other = f.store.run_pipeline(&fast_spec("other", EncoderKind::Tft)).unwrap().manifest;
    let body = json!({"run_a": f.tft, "run_b": other.run_id});
    let (s, text) = call(&app, "POST", "/compare", Some(body)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{text}");
    assert!(text.contains("different datasets"));
}

#[tokio::test]
async fn tree_reports_cooccurring_codes() {
    let f = fixture();
    let app = router(AppState::new(f.store.clone(), 1));
    let (_, tree) = get_json(&app, "/datasets/synth/tree").await;
    let codes: Vec<String> = serde_json::from_value(tree["cooccurrence"]["codes"].clone()).unwrap();
    let counts: Vec<Vec<u64>> = serde_json::from_value(tree["cooccurrence"]["counts"].clone()).unwrap();
    let node_codes: Vec<&str> = tree["nodes"].as_array().unwrap().iter().map(|n| n["code"].as_str().unwrap()).collect();
    assert_eq!(codes, node_codes);
    let ea = codes.iter().position(|c| c == "EA").unwrap();
    let ou = codes.iter().position(|c| c == "OU").unwrap();
    let tn = codes.iter().position(|c| c == "TN").unwrap();
    // arcing records carry EA and OU together; 24 records round-robin over 3 classes
    assert_eq!(counts[ea][ea], 8);
    assert_eq!(counts[ea][ou], 8);
    assert_eq!(counts[ea][tn], 0);
    for (i, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            assert_eq!(c, counts[j][i]);
        }
    }
}
