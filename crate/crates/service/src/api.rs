//! HTTP/JSON API over a [`Store`].
//!
//! | route | response |
//! |---|---|
//! | `GET /datasets` | `[DatasetSummary]` |
//! | `GET /datasets/{name}/tree` | `TreePayload` |
//! | `POST /runs` | `RunOutcome`; 202 when queued, 200 when cached |
//! | `GET /runs` | `[RunSummary]` |
//! | `GET /runs/{id}` | `RunManifest` |
//! | `GET /runs/{id}/map?method=&k=` | `MapPayload` |
//! | `GET /runs/{id}/latents?ids=a,b` | `LatentsPayload` |
//! | `GET /runs/{id}/metrics` | `MetricsPayload` |
//! | `GET /runs/{id}/export?format=csv\|json` | CSV text or `LatentMatrix` |
//! | `POST /compare` | `ComparisonPayload` |
//! | `GET /compare/{a}/{b}?alignment=` | `ComparisonPayload` |
//!
//! Errors are `{"error": message}` with a 4xx or 5xx status.

use std::collections::{HashMap, HashSet};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use latscape_analysis::{Alignment, ClusterMethod};
use serde::de::DeserializeOwned;
use tokio::sync::mpsc;

use crate::compare::CompareRequest;
use crate::error::{io_err, ServiceError};
use crate::manifest::RunSpec;
use crate::store::Store;
use crate::views::{DatasetSummary, ExportFormat, RunSummary};

pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match &self.0 {
            ServiceError::DatasetNotFound(_) | ServiceError::RunNotFound(_) | ServiceError::ComparisonNotFound(_) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::RunNotComplete { .. } | ServiceError::DatasetConflict(_) => StatusCode::CONFLICT,
            ServiceError::DatasetMismatch { .. }
            | ServiceError::InvalidRequest(_)
            | ServiceError::Json(_)
            | ServiceError::Analysis(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        (status, Json(serde_json::json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    queue: mpsc::UnboundedSender<String>,
    inflight: Arc<Mutex<HashSet<String>>>,
}

impl AppState {
    /// Starts `workers` pipeline executors (at least one). Must be called
    /// inside a Tokio runtime.
    pub fn new(store: Arc<Store>, workers: usize) -> Self {
        let (tx, rx) = mpsc::unbounded_channel::<String>();
        let rx = Arc::new(tokio::sync::Mutex::new(rx));
        let inflight = Arc::new(Mutex::new(HashSet::new()));
        for _ in 0..workers.max(1) {
            let rx = rx.clone();
            let store = store.clone();
            let inflight = inflight.clone();
            tokio::spawn(async move {
                loop {
                    let next = rx.lock().await.recv().await;
                    let Some(id) = next else { break };
                    let s = store.clone();
                    let run = id.clone();
                    match tokio::task::spawn_blocking(move || s.execute_run(&run)).await {
                        Ok(Ok(m)) => log::info!("run {id} finished: {}", m.status),
                        Ok(Err(e)) => log::error!("run {id}: {e}"),
                        Err(e) => log::error!("run {id} panicked: {e}"),
                    }
                    inflight.lock().unwrap().remove(&id);
                }
            });
        }
        Self {
            store,
            queue: tx,
            inflight,
        }
    }

    fn enqueue(&self, run_id: &str) {
        if self.inflight.lock().unwrap().insert(run_id.to_string()) {
            let _ = self.queue.send(run_id.to_string());
        }
    }
}

async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Store) -> crate::error::Result<T> + Send + 'static,
{
    let store = state.store.clone();
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ApiError(ServiceError::InvalidRequest(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError(ServiceError::InvalidRequest(format!("request body: {e}"))))
}

/// Parses a snake_case enum query value.
fn parse_enum<T: DeserializeOwned>(q: &HashMap<String, String>, key: &str) -> ApiResult<Option<T>> {
    q.get(key)
        .map(|v| {
            serde_json::from_value(serde_json::Value::String(v.clone()))
                .map_err(|_| ApiError(ServiceError::InvalidRequest(format!("invalid {key} `{v}`"))))
        })
        .transpose()
}

async fn list_datasets(State(st): State<AppState>) -> Json<Vec<DatasetSummary>> {
    Json(st.store.datasets().iter().map(DatasetSummary::from).collect())
}

async fn dataset_tree(State(st): State<AppState>, Path(name): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&st, move |s| s.tree_payload(&name)).await?))
}

async fn create_run(State(st): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let spec: RunSpec = parse_body(&body)?;
    let out = blocking(&st, move |s| s.prepare_run(&spec)).await?;
    if out.cached {
        return Ok((StatusCode::OK, Json(out)).into_response());
    }
    st.enqueue(&out.manifest.run_id);
    Ok((StatusCode::ACCEPTED, Json(out)).into_response())
}

async fn list_runs(State(st): State<AppState>) -> ApiResult<impl IntoResponse> {
    let runs = blocking(&st, |s| s.list_runs()).await?;
    Ok(Json(runs.iter().map(RunSummary::from).collect::<Vec<_>>()))
}

async fn get_run(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&st, move |s| s.read_manifest(&id)).await?))
}

async fn run_map(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<impl IntoResponse> {
    let method: Option<ClusterMethod> = parse_enum(&q, "method")?;
    let k = q
        .get("k")
        .map(|v| {
            v.parse::<usize>()
                .map_err(|_| ApiError(ServiceError::InvalidRequest(format!("invalid k `{v}`"))))
        })
        .transpose()?;
    Ok(Json(blocking(&st, move |s| s.map_payload(&id, method, k)).await?))
}

async fn run_latents(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<impl IntoResponse> {
    let ids: Option<Vec<String>> = q.get("ids").map(|v| {
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    });
    Ok(Json(blocking(&st, move |s| s.latents_payload(&id, ids.as_deref())).await?))
}

async fn run_metrics(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&st, move |s| s.metrics_payload(&id)).await?))
}

async fn run_export(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let format: ExportFormat = parse_enum(&q, "format")?.unwrap_or(ExportFormat::Csv);
    let body = blocking(&st, move |s| s.export(&id, format)).await?;
    let ctype = match format {
        ExportFormat::Csv => "text/csv; charset=utf-8",
        ExportFormat::Json => "application/json",
    };
    Ok(([(header::CONTENT_TYPE, ctype)], body).into_response())
}

async fn create_comparison(State(st): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CompareRequest = parse_body(&body)?;
    Ok(Json(
        blocking(&st, move |s| s.compare_runs(&req.run_a, &req.run_b, req.k, req.alignment)).await?,
    ))
}

async fn get_comparison(
    State(st): State<AppState>,
    Path((a, b)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<impl IntoResponse> {
    let alignment: Alignment = parse_enum(&q, "alignment")?.unwrap_or_default();
    Ok(Json(blocking(&st, move |s| s.comparison(&a, &b, alignment)).await?))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/datasets", get(list_datasets))
        .route("/datasets/{name}/tree", get(dataset_tree))
        .route("/runs", get(list_runs).post(create_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/map", get(run_map))
        .route("/runs/{id}/latents", get(run_latents))
        .route("/runs/{id}/metrics", get(run_metrics))
        .route("/runs/{id}/export", get(run_export))
        .route("/compare", axum::routing::post(create_comparison))
        .route("/compare/{a}/{b}", get(get_comparison))
        .fallback(|| async { (StatusCode::NOT_FOUND, Json(serde_json::json!({ "error": "no such route" }))) })
        .with_state(state)
}

/// Serves the API on `addr` until the process is stopped.
pub async fn serve(addr: SocketAddr, store: Arc<Store>, workers: usize) -> crate::error::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(io_err(format!("bind {addr}")))?;
    log::info!("listening on {}", listener.local_addr().map_err(io_err("listener"))?);
    let app = router(AppState::new(store, workers));
    axum::serve(listener, app).await.map_err(io_err("serve"))
}
