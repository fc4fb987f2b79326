//! HTTP query service.
//!
//! `POST /v1/query` with `{"query": "..."}` answers through the graph.
//! `GET /v1/experts` lists expert names and `GET /v1/trace/{id}` returns a
//! recent trace. Errors are `{"error": {"kind", "message"}}`, with the trace
//! attached when the query reached the graph.

use std::collections::{HashMap, VecDeque};
use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use slg_core::graph::{Graph, GraphError, RouteTrace, TraceRecord, TraceSink};
use slg_core::util::sha256_hex;

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    /// Queries answered at once; further requests wait for a slot.
    pub max_concurrency: usize,
    /// Where trace JSONL files go; `None` keeps traces in memory only.
    pub trace_dir: Option<PathBuf>,
    /// Traces kept for `GET /v1/trace/{id}`.
    pub recent_traces: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self { max_concurrency: 8, trace_dir: None, recent_traces: 10_000 }
    }
}

#[derive(Default)]
struct Recent {
    order: VecDeque<String>,
    by_id: HashMap<String, TraceRecord>,
}

pub struct AppState {
    graph: Arc<Graph>,
    sink: Option<Arc<TraceSink>>,
    recent: Mutex<Recent>,
    capacity: usize,
    permits: Arc<Semaphore>,
    counter: AtomicU64,
}

impl AppState {
    pub fn new(graph: Graph, opts: ServiceOptions) -> std::io::Result<Arc<Self>> {
        let sink = opts.trace_dir.map(TraceSink::new).transpose()?.map(Arc::new);
        Ok(Arc::new(Self {
            graph: Arc::new(graph),
            sink,
            recent: Mutex::new(Recent::default()),
            capacity: opts.recent_traces.max(1),
            permits: Arc::new(Semaphore::new(opts.max_concurrency.max(1))),
            counter: AtomicU64::new(0),
        }))
    }

    fn next_trace_id(&self, query: &str) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let now = Utc::now().timestamp_nanos_opt().unwrap_or_default();
        sha256_hex(format!("{now}:{n}:{query}").as_bytes())[..16].to_string()
    }

    fn remember(&self, record: TraceRecord) {
        let mut recent = self.recent.lock().unwrap_or_else(|e| e.into_inner());
        recent.order.push_back(record.trace_id.clone());
        recent.by_id.insert(record.trace_id.clone(), record);
        while recent.order.len() > self.capacity {
            if let Some(old) = recent.order.pop_front() {
                recent.by_id.remove(&old);
            }
        }
    }

    pub fn trace(&self, id: &str) -> Option<TraceRecord> {
        self.recent.lock().unwrap_or_else(|e| e.into_inner()).by_id.get(id).cloned()
    }

    /// Syncs the trace log to disk.
    pub fn flush(&self) -> std::io::Result<()> {
        self.sink.as_ref().map_or(Ok(()), |s| s.flush())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub answer: String,
    pub expert: String,
    pub trace_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: ErrorBody,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<RouteTrace>,
}

fn error(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    let body =
        ErrorResponse { error: ErrorBody { kind: kind.into(), message: message.into() }, trace_id: None, trace: None };
    (status, Json(body)).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/query", post(query))
        .route("/v1/experts", get(experts))
        .route("/v1/trace/{id}", get(trace))
        .fallback(|| async { error(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests and
/// flushes the trace log.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state.clone())).with_graceful_shutdown(shutdown).await?;
    state.flush()
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}

async fn query(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let request: QueryRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()),
    };
    if request.query.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "invalid_request", "query is empty");
    }
    let Ok(permit) = state.permits.clone().acquire_owned().await else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "unavailable", "service is shutting down");
    };
    let trace_id = state.next_trace_id(&request.query);
    let worker = state.clone();
    let id = trace_id.clone();
    let joined = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let result = worker.graph.answer(&request.query);
        let (trace, err) = match &result {
            Ok((_, trace)) => (Some(trace.clone()), None),
            Err(e) => (e.trace().cloned(), Some(e.to_string())),
        };
        if let Some(trace) = trace {
            let record = TraceRecord { trace_id: id, timestamp: Utc::now(), trace, error: err };
            if let Some(sink) = &worker.sink {
                if let Err(e) = sink.append(&record) {
                    tracing::error!("writing trace {}: {e}", record.trace_id);
                }
            }
            worker.remember(record);
        }
        result
    })
    .await;

    let result = match joined {
        Ok(r) => r,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
    };
    match result {
        Ok((answer, trace)) => {
            let expert = trace.resolved_expert.unwrap_or_default();
            (StatusCode::OK, Json(QueryResponse { answer, expert, trace_id })).into_response()
        }
        Err(e) => {
            let (status, kind) = match &e {
                GraphError::EmptyQuery => (StatusCode::BAD_REQUEST, "invalid_request"),
                GraphError::Routing { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "routing"),
                GraphError::Orchestrator { .. } | GraphError::Expert { .. } => (StatusCode::BAD_GATEWAY, "backend"),
                GraphError::Build(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
            };
            let trace = e.trace().cloned();
            let body = ErrorResponse {
                error: ErrorBody { kind: kind.into(), message: e.to_string() },
                trace_id: trace.as_ref().map(|_| trace_id),
                trace,
            };
            (status, Json(body)).into_response()
        }
    }
}

async fn experts(State(state): State<Arc<AppState>>) -> Response {
    let names: Vec<&str> = state.graph.experts().collect();
    Json(json!({ "experts": names })).into_response()
}

async fn trace(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.trace(&id) {
        Some(record) => Json(record).into_response(),
        None => error(StatusCode::NOT_FOUND, "not_found", format!("no recent trace {id:?}")),
    }
}
