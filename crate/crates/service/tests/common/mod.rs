#![allow(dead_code)]

use std::path::Path;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;

use latscape_analysis::ClusterParams;
use latscape_encoders::{EncoderConfig, EncoderKind};
use latscape_ingest::{generate_synthetic_dataset, preprocess_dataset, PreprocessConfig, SyntheticSpec};
use latscape_projection::ProjectionConfig;
use latscape_service::{RunSpec, Store};
use serde_json::{json, Value};
use tower::ServiceExt;

pub const API_SCHEMA: &str = include_str!("../../schemas/api.schema.json");

/// 24 three-channel records at 1 kHz.
pub fn small_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_records: 24,
        channels: 3,
        sample_rate_hz: 1000.0,
        seed,
        ..SyntheticSpec::default()
    }
}

pub fn register_small(store: &Store, name: &str, seed: u64, scratch: &Path) {
    let spec = small_spec(seed);
    let raw = scratch.join(format!("raw-{name}"));
    generate_synthetic_dataset(&spec, &raw).unwrap();
    let (pre, taxonomy) = preprocess_dataset(&raw, &spec.schema(), &PreprocessConfig::default()).unwrap();
    store.register_dataset(name, &pre.set, &taxonomy).unwrap();
}

pub fn fast_encoder(kind: EncoderKind) -> EncoderConfig {
    EncoderConfig {
        kind,
        latent_dim: 4,
        model_input_len: 32,
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        patch_len: 4,
        kernel_sizes: vec![3, 3],
        strides: vec![2, 2],
        epochs: 2,
        batch_size: 8,
        ..EncoderConfig::default()
    }
}

pub fn fast_spec(dataset: &str, kind: EncoderKind) -> RunSpec {
    RunSpec {
        dataset: dataset.to_string(),
        encoder: fast_encoder(kind),
        projection: ProjectionConfig {
            n_iter: 250,
            ..ProjectionConfig::default()
        },
        cluster: ClusterParams::dbscan(None, 3),
    }
}

/// Validates `value` against `$defs/<def>` of the API schema.
pub fn check_schema(def: &str, value: &serde_json::Value) {
    let mut schema: serde_json::Value = serde_json::from_str(API_SCHEMA).unwrap();
    assert!(schema["$defs"].get(def).is_some(), "no schema for {def}");
    schema["$ref"] = serde_json::Value::String(format!("#/$defs/{def}"));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(value)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect();
    assert!(errors.is_empty(), "{def}: {errors:#?}\n{value:#}");
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

pub async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, text) = call(app, "GET", uri, None).await;
    (s, serde_json::from_str(&text).unwrap_or_else(|e| panic!("{uri}: {e}: {text}")))
}

/// Calls every documented endpoint for a completed pair of runs on
/// `dataset` and validates each body against the API schema.
pub async fn check_endpoints(app: &Router, dataset: &str, run_a: &str, run_b: &str, n_points: usize, resubmit: Value) {
    let (s, v) = get_json(app, "/datasets").await;
    assert_eq!(s, StatusCode::OK);
    check_schema("datasets", &v);

    let (s, v) = get_json(app, &format!("/datasets/{dataset}/tree")).await;
    assert_eq!(s, StatusCode::OK);
    check_schema("tree", &v);

    let (s, v) = get_json(app, "/runs").await;
    assert_eq!(s, StatusCode::OK);
    check_schema("runs", &v);

    let (s, v) = get_json(app, &format!("/runs/{run_a}")).await;
    assert_eq!(s, StatusCode::OK);
    check_schema("manifest", &v);
    assert_eq!(v["status"], "complete");

    for query in ["", "?method=dbscan", "?method=gmm&k=2", "?method=ahc&k=3"] {
        let (s, v) = get_json(app, &format!("/runs/{run_a}/map{query}")).await;
        assert_eq!(s, StatusCode::OK, "{query}");
        check_schema("map", &v);
        assert_eq!(v["points"].as_array().unwrap().len(), n_points);
    }

    let (s, v) = get_json(app, &format!("/runs/{run_a}/latents")).await;
    assert_eq!(s, StatusCode::OK);
    check_schema("latents", &v);

    let (s, v) = get_json(app, &format!("/runs/{run_a}/metrics")).await;
    assert_eq!(s, StatusCode::OK);
    check_schema("metrics", &v);

    let (s, v) = get_json(app, &format!("/runs/{run_a}/export?format=json")).await;
    assert_eq!(s, StatusCode::OK);
    check_schema("export_json", &v);

    let (s, text) = call(app, "GET", &format!("/runs/{run_a}/export?format=csv"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(text.starts_with("segment_id,dim_0,"));

    let body = json!({"run_a": run_a, "run_b": run_b, "k": 5});
    let (s, text) = call(app, "POST", "/compare", Some(body)).await;
    assert_eq!(s, StatusCode::OK, "{text}");
    check_schema("comparison", &serde_json::from_str(&text).unwrap());

    for q in ["", "?alignment=none", "?alignment=procrustes"] {
        let (s, v) = get_json(app, &format!("/compare/{run_a}/{run_b}{q}")).await;
        assert_eq!(s, StatusCode::OK, "{q}");
        check_schema("comparison", &v);
    }

    let (s, text) = call(app, "POST", "/runs", Some(resubmit)).await;
    assert_eq!(s, StatusCode::OK);
    let outcome: Value = serde_json::from_str(&text).unwrap();
    check_schema("run_outcome", &outcome);
    assert_eq!(outcome["cached"], true);
}
