//! HTTP facade over the in-memory engine. One worker thread owns the
//! engine; handlers forward commands over a channel and await the reply,
//! which serializes interactive calls and keeps the state single-writer.

use std::sync::mpsc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use railchain_core::engine::{
    BookingResponse, DryRunReport, Engine, EngineConfig, EngineError, Envelope, Message,
    Rejection, StatsSnapshot, WireRequest,
};
use railchain_core::model::{RequestId, TransportChain, ValidationResult};

/// Outcome of one applied message: what it was and how much work it
/// caused.
#[derive(Clone, Debug, Serialize)]
pub struct ApplySummary {
    pub kind: String,
    pub affected: usize,
    pub enqueued: usize,
    pub parked: usize,
    /// Tasks processed right away (zero for deferred messages).
    pub processed: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct BatchSummary {
    pub accepted: usize,
    pub rejected: Vec<BatchRejection>,
    pub processed: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct BatchRejection {
    pub index: usize,
    #[serde(flatten)]
    pub rejection: Rejection,
}

enum Command {
    Apply {
        message: Message,
        defer: bool,
        reply: oneshot::Sender<Result<ApplySummary, Rejection>>,
    },
    Batch {
        envelopes: Vec<Envelope>,
        defer: bool,
        reply: oneshot::Sender<BatchSummary>,
    },
    Book {
        request: WireRequest,
        reply: oneshot::Sender<Result<BookingResponse, Rejection>>,
    },
    DryRunSearch {
        request: WireRequest,
        reply: oneshot::Sender<Result<DryRunReport, Rejection>>,
    },
    ValidateChain {
        request: WireRequest,
        chain: TransportChain,
        reply: oneshot::Sender<Result<ValidationResult, Rejection>>,
    },
    Stats {
        reply: oneshot::Sender<StatsSnapshot>,
    },
}

fn rejection_of(error: EngineError) -> Rejection {
    match error {
        EngineError::Rejected(rejection) => rejection,
        EngineError::Lookup(e) => Rejection::new("not-found", e.to_string()),
    }
}

fn apply_one(engine: &mut Engine, message: Message, defer: bool) -> Result<ApplySummary, Rejection> {
    let report = engine.apply(message, defer).map_err(rejection_of)?;
    let processed =
        if defer { 0 } else { engine.run_pending().map_err(rejection_of)?.len() };
    Ok(ApplySummary {
        kind: report.kind.to_string(),
        affected: report.affected.len(),
        enqueued: report.enqueued,
        parked: report.parked,
        processed,
    })
}

fn worker(rx: mpsc::Receiver<Command>, config: EngineConfig) {
    let mut engine = Engine::new(config);
    while let Ok(command) = rx.recv() {
        match command {
            Command::Apply { message, defer, reply } => {
                let _ = reply.send(apply_one(&mut engine, message, defer));
            }
            Command::Batch { envelopes, defer, reply } => {
                let mut summary =
                    BatchSummary { accepted: 0, rejected: Vec::new(), processed: 0 };
                for (index, envelope) in envelopes.into_iter().enumerate() {
                    match apply_one(&mut engine, envelope.message, defer || envelope.defer) {
                        Ok(applied) => {
                            summary.accepted += 1;
                            summary.processed += applied.processed;
                        }
                        Err(rejection) => {
                            summary.rejected.push(BatchRejection { index, rejection });
                        }
                    }
                }
                let _ = reply.send(summary);
            }
            Command::Book { request, reply } => {
                let _ = reply.send(engine.handle_booking(request).map_err(rejection_of));
            }
            Command::DryRunSearch { request, reply } => {
                let resolved = engine.resolve_request(request);
                let _ = reply.send(engine.dryrun_search(&resolved).map_err(rejection_of));
            }
            Command::ValidateChain { request, chain, reply } => {
                let resolved = engine.resolve_request(request);
                let _ = reply
                    .send(engine.validate_manual_chain(&resolved, &chain).map_err(rejection_of));
            }
            Command::Stats { reply } => {
                let _ = reply.send(engine.snapshot_stats());
            }
        }
    }
}

#[derive(Clone)]
pub struct ServiceHandle {
    tx: mpsc::Sender<Command>,
}

impl ServiceHandle {
    pub fn spawn(config: EngineConfig) -> ServiceHandle {
        let (tx, rx) = mpsc::channel();
        std::thread::Builder::new()
            .name("engine-worker".to_string())
            .spawn(move || worker(rx, config))
            .expect("spawn engine worker");
        ServiceHandle { tx }
    }

    async fn send<T>(&self, build: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, ApiError> {
        let (reply, wait) = oneshot::channel();
        self.tx.send(build(reply)).map_err(|_| ApiError::WorkerGone)?;
        wait.await.map_err(|_| ApiError::WorkerGone)
    }
}

enum ApiError {
    WorkerGone,
    Rejected(Rejection),
    BadBody(String),
}

impl From<Rejection> for ApiError {
    fn from(rejection: Rejection) -> Self {
        ApiError::Rejected(rejection)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::WorkerGone => (
                StatusCode::SERVICE_UNAVAILABLE,
                Json(Rejection::new("worker-gone", "engine worker is not running")),
            )
                .into_response(),
            ApiError::Rejected(rejection) => {
                let status = if matches!(rejection.code.as_str(), "not-found" | "unknown-reference") {
                    StatusCode::NOT_FOUND
                } else {
                    StatusCode::UNPROCESSABLE_ENTITY
                };
                (status, Json(rejection)).into_response()
            }
            ApiError::BadBody(reason) => (
                StatusCode::BAD_REQUEST,
                Json(Rejection::new("bad-body", reason)),
            )
                .into_response(),
        }
    }
}

#[derive(Deserialize, Default)]
struct DeferQuery {
    #[serde(default)]
    defer: bool,
}

async fn init_state(
    State(handle): State<ServiceHandle>,
    Json(message): Json<Message>,
) -> Result<Json<ApplySummary>, ApiError> {
    if !matches!(message, Message::InitState { .. }) {
        return Err(ApiError::BadBody("body must be an init-state message".to_string()));
    }
    let summary = handle
        .send(|reply| Command::Apply { message, defer: false, reply })
        .await??;
    Ok(Json(summary))
}

/// NDJSON envelope stream; `?defer=true` parks every revalidation in the
/// batch until the next compute trigger.
async fn messages(
    State(handle): State<ServiceHandle>,
    Query(query): Query<DeferQuery>,
    body: String,
) -> Result<Json<BatchSummary>, ApiError> {
    let mut envelopes = Vec::new();
    for (number, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let envelope: Envelope = serde_json::from_str(line)
            .map_err(|e| ApiError::BadBody(format!("line {}: {e}", number + 1)))?;
        envelopes.push(envelope);
    }
    let summary = handle
        .send(|reply| Command::Batch { envelopes, defer: query.defer, reply })
        .await?;
    Ok(Json(summary))
}

async fn trigger_compute(
    State(handle): State<ServiceHandle>,
) -> Result<Json<ApplySummary>, ApiError> {
    let summary = handle
        .send(|reply| Command::Apply { message: Message::TriggerCompute, defer: false, reply })
        .await??;
    Ok(Json(summary))
}

async fn book_request(
    State(handle): State<ServiceHandle>,
    Json(request): Json<WireRequest>,
) -> Result<Json<BookingResponse>, ApiError> {
    let response = handle.send(|reply| Command::Book { request, reply }).await??;
    Ok(Json(response))
}

async fn update_request(
    State(handle): State<ServiceHandle>,
    Path(id): Path<String>,
    Json(request): Json<WireRequest>,
) -> Result<Json<ApplySummary>, ApiError> {
    if request.id != RequestId::new(id.clone()) {
        return Err(ApiError::BadBody(format!("body id {} does not match path {id}", request.id)));
    }
    let summary = handle
        .send(|reply| Command::Apply {
            message: Message::UpdateRequest { request },
            defer: false,
            reply,
        })
        .await??;
    Ok(Json(summary))
}

async fn cancel_request(
    State(handle): State<ServiceHandle>,
    Path(id): Path<String>,
) -> Result<Json<ApplySummary>, ApiError> {
    let summary = handle
        .send(|reply| Command::Apply {
            message: Message::CancelRequest { id: RequestId::new(id) },
            defer: false,
            reply,
        })
        .await??;
    Ok(Json(summary))
}

async fn dryrun_search(
    State(handle): State<ServiceHandle>,
    Json(request): Json<WireRequest>,
) -> Result<Json<DryRunReport>, ApiError> {
    let report = handle.send(|reply| Command::DryRunSearch { request, reply }).await??;
    Ok(Json(report))
}

#[derive(Deserialize)]
struct ValidateChainBody {
    request: WireRequest,
    chain: TransportChain,
}

async fn dryrun_validate_chain(
    State(handle): State<ServiceHandle>,
    Json(body): Json<ValidateChainBody>,
) -> Result<Json<ValidationResult>, ApiError> {
    let result = handle
        .send(|reply| Command::ValidateChain { request: body.request, chain: body.chain, reply })
        .await??;
    Ok(Json(result))
}

async fn stats(State(handle): State<ServiceHandle>) -> Result<Json<StatsSnapshot>, ApiError> {
    let snapshot = handle.send(|reply| Command::Stats { reply }).await?;
    Ok(Json(snapshot))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

pub fn router(handle: ServiceHandle) -> Router {
    Router::new()
        .route("/state/init", post(init_state))
        .route("/messages", post(messages))
        .route("/compute/trigger", post(trigger_compute))
        .route("/requests", post(book_request))
        .route("/requests/:id", axum::routing::put(update_request).delete(cancel_request))
        .route("/dryrun/search", post(dryrun_search))
        .route("/dryrun/validate-chain", post(dryrun_validate_chain))
        .route("/stats", get(stats))
        .route("/health", get(health))
        .with_state(handle)
}

pub fn app(config: EngineConfig) -> Router {
    router(ServiceHandle::spawn(config))
}
