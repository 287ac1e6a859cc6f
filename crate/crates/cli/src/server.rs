//! `serve`: the annotation HTTP API over an [`AnnotationStore`].
//!
//! - `GET  /api/tasks?rater=<id>&limit=<n>`: pending changes for a rater
//! - `POST /api/labels {change_id, rater_id, label, note}`: store a label
//! - `GET  /api/kappa?rater_a=<id>&rater_b=<id>`: Cohen's kappa
//! - `GET  /api/health`
//!
//! Every accepted label is appended to the store's log before the response
//! is sent; the snapshot is refreshed after each write and on shutdown.

use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::Context;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use untangle_core::goldset::{AnnotationStore, GoldsetError};
use untangle_core::mining::MethodChangeRow;

use crate::args::ServeArgs;
use crate::commands::load_changes;
use crate::invalid;

const DEFAULT_TASK_LIMIT: usize = 20;

type Store = Arc<AnnotationStore>;

#[derive(Debug)]
struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<GoldsetError> for ApiError {
    fn from(e: GoldsetError) -> Self {
        let status = match e {
            GoldsetError::UnknownChange(_) => StatusCode::NOT_FOUND,
            GoldsetError::IoFailure(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError(status, e.to_string())
    }
}

#[derive(Deserialize)]
struct TasksQuery {
    rater: String,
    limit: Option<usize>,
}

async fn tasks(
    State(store): State<Store>,
    Query(q): Query<TasksQuery>,
) -> Result<Json<Vec<MethodChangeRow>>, ApiError> {
    if q.rater.trim().is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "rater must be non-empty".into()));
    }
    let limit = q.limit.unwrap_or(DEFAULT_TASK_LIMIT);
    Ok(Json(store.pending(&q.rater, limit).iter().map(|c| c.to_row()).collect()))
}

#[derive(Deserialize)]
struct LabelRequest {
    change_id: String,
    rater_id: String,
    label: String,
    #[serde(default)]
    note: String,
}

#[derive(Serialize)]
struct StoredLabel {
    change_id: String,
    rater_id: String,
    label: untangle_core::Label,
    note: String,
}

async fn labels(State(store): State<Store>, Json(req): Json<LabelRequest>) -> Result<Json<StoredLabel>, ApiError> {
    let stored = tokio::task::spawn_blocking(move || {
        let rec = store.record_annotation(&req.change_id, &req.rater_id, &req.label, &req.note)?;
        store.snapshot()?;
        Ok::<_, GoldsetError>(rec)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(StoredLabel {
        change_id: stored.change.change_id,
        rater_id: stored.rater_id.unwrap_or_default(),
        label: stored.label,
        note: stored.note.unwrap_or_default(),
    }))
}

#[derive(Deserialize)]
struct KappaQuery {
    rater_a: String,
    rater_b: String,
}

async fn kappa(
    State(store): State<Store>,
    Query(q): Query<KappaQuery>,
) -> Result<Json<untangle_core::goldset::KappaResult>, ApiError> {
    Ok(Json(store.kappa(&q.rater_a, &q.rater_b)?))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

pub fn router(store: Store, static_dir: Option<&std::path::Path>) -> Router {
    let api = Router::new()
        .route("/api/tasks", get(tasks))
        .route("/api/labels", post(labels))
        .route("/api/kappa", get(kappa))
        .route("/api/health", get(health))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let addr: SocketAddr = args.addr.parse().map_err(|_| invalid(format!("bad listen address {:?}", args.addr)))?;
    if let Some(dir) = &args.static_dir {
        if !dir.is_dir() {
            return Err(invalid(format!("static directory {} not found", dir.display())));
        }
    }
    let queue = load_changes(&args.changes)?;
    let store = Arc::new(
        AnnotationStore::open(&args.store, queue).with_context(|| format!("opening store {}", args.store.display()))?,
    );
    let app = router(store.clone(), args.static_dir.as_deref());

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().context("starting runtime")?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        use std::io::Write;
        std::io::stdout().flush()?;
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("serving")
    })?;
    store.snapshot()?;
    Ok(())
}
