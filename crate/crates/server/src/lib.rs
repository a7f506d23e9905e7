//! HTTP front end for the guideline runtime: the REST API used by the web
//! client, the EMR inbound endpoint and the server-sent event stream.

mod error;
mod sse;

use std::sync::Arc;
use std::time::Duration as StdDuration;

use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::header::CONTENT_TYPE;
use axum::http::request::Parts;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use carepath_core::eventlog::EventLogEntry;
use carepath_core::guideline::Bindings;
use carepath_core::ids::{CaseId, WorkItemId};
use carepath_core::runtime::{Actor, CaseFilter, ExportFormat, Runtime, WorkItemFilter};
use carepath_core::scheduler::ClockMode;
use carepath_core::time::{Duration, Instant};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast;

pub use error::ApiError;

pub const HL7_CONTENT_TYPE: &str = "x-application/hl7-v2+er7";

const BROADCAST_CAPACITY: usize = 1024;

#[derive(Clone)]
pub struct AppState {
    pub rt: Arc<Runtime>,
    tx: broadcast::Sender<EventLogEntry>,
    test_mode: bool,
}

impl AppState {
    /// Wraps a runtime and forwards every committed log entry to SSE clients.
    pub fn new(rt: Arc<Runtime>, test_mode: bool) -> Self {
        let (tx, _) = broadcast::channel(BROADCAST_CAPACITY);
        let forward = tx.clone();
        rt.subscribe(Box::new(move |entry| {
            let _ = forward.send(entry.clone());
        }));
        AppState { rt, tx, test_mode }
    }

    pub(crate) fn subscribe(&self) -> broadcast::Receiver<EventLogEntry> {
        self.tx.subscribe()
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/guidelines", post(deploy).get(list_guidelines))
        .route("/cases", post(start_case).get(list_cases))
        .route("/cases/{id}", get(get_case))
        .route("/cases/{id}/scene", get(get_scene))
        .route("/cases/{id}/answers", post(answer))
        .route("/cases/{id}/abort", post(abort))
        .route("/cases/{id}/export", get(export))
        .route("/work-items", get(list_work_items))
        .route("/work-items/{id}/complete", post(complete))
        .route("/emr/inbound", post(emr_inbound))
        .route("/test/advance", post(test_advance))
        .route("/events/stream", get(sse::stream));
    Router::new().nest("/v1", api).with_state(state)
}

/// Serves `router(state)` on an already bound listener.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Drives a `Wall` clock: every `period`, virtual time moves to
/// `base + elapsed * scale` and due timers fire.
pub fn spawn_wall_clock(rt: Arc<Runtime>, period: StdDuration) -> tokio::task::JoinHandle<()> {
    let scale = match rt.clock_mode() {
        ClockMode::Wall { scale } => scale,
        ClockMode::Virtual => 1.0,
    };
    let base = rt.now();
    let started = std::time::Instant::now();
    tokio::spawn(async move {
        let mut ticks = tokio::time::interval(period);
        loop {
            ticks.tick().await;
            let elapsed_ms = started.elapsed().as_secs_f64() * 1000.0 * scale;
            let target = base + Duration::from_millis(elapsed_ms as u64);
            let rt = rt.clone();
            let _ = tokio::task::spawn_blocking(move || {
                if target > rt.now() {
                    let _ = rt.advance_to(target);
                }
            })
            .await;
        }
    })
}

/// The caller, from the `X-Actor` and `X-Role` headers.
pub struct Caller(pub Actor);

fn header<'a>(headers: &'a HeaderMap, name: &str) -> Option<&'a str> {
    headers
        .get(name)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
}

impl<S: Send + Sync> FromRequestParts<S> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        match (header(&parts.headers, "x-actor"), header(&parts.headers, "x-role")) {
            (Some(actor), Some(role)) => Ok(Caller(Actor::new(actor, role))),
            _ => Err(ApiError::unauthorized()),
        }
    }
}

fn json_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn health(State(st): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "now": st.rt.now(),
        "clock": st.rt.clock_mode(),
        "log_len": st.rt.log_len(),
        "test_mode": st.test_mode,
    }))
}

async fn deploy(State(st): State<AppState>, _caller: Caller, body: String) -> Result<Response, ApiError> {
    let d = st.rt.deploy_text(&body)?;
    let warnings: Vec<_> = d.report.warnings().cloned().collect();
    let body = json!({ "id": d.id, "revision": d.revision, "warnings": warnings });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn list_guidelines(State(st): State<AppState>) -> impl IntoResponse {
    Json(st.rt.deployments())
}

#[derive(Deserialize)]
struct StartCase {
    guideline_id: String,
    patient_ref: String,
}

async fn start_case(State(st): State<AppState>, Caller(actor): Caller, body: axum::body::Bytes) -> Result<Response, ApiError> {
    let req: StartCase = json_body(&body)?;
    let view = st.rt.start_case(&req.guideline_id, &req.patient_ref, &actor)?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn list_cases(State(st): State<AppState>, Query(filter): Query<CaseFilter>) -> impl IntoResponse {
    Json(st.rt.list_cases(&filter))
}

async fn get_case(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(st.rt.case_view(&CaseId::new(id))?).into_response())
}

async fn get_scene(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(st.rt.scene(&CaseId::new(id))?).into_response())
}

#[derive(Deserialize)]
struct Answer {
    question: String,
    option: String,
}

async fn answer(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Caller(actor): Caller,
    body: axum::body::Bytes,
) -> Result<Response, ApiError> {
    let req: Answer = json_body(&body)?;
    let outcome = st.rt.answer_scene(&CaseId::new(id), &req.question, &req.option, &actor)?;
    Ok(Json(outcome).into_response())
}

#[derive(Deserialize)]
struct Abort {
    reason: String,
}

async fn abort(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Caller(actor): Caller,
    body: axum::body::Bytes,
) -> Result<Response, ApiError> {
    let req: Abort = json_body(&body)?;
    let events = st.rt.abort_case(&CaseId::new(id), &req.reason, &actor)?;
    Ok(Json(json!({ "events": events })).into_response())
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let name = q.format.as_deref().unwrap_or("json");
    let format = ExportFormat::parse(name).ok_or_else(|| ApiError::bad_request(format!("unknown export format `{name}`")))?;
    let text = st.rt.export_case(&CaseId::new(id), format)?;
    Ok(([(CONTENT_TYPE, format.content_type())], text).into_response())
}

async fn list_work_items(State(st): State<AppState>, Query(filter): Query<WorkItemFilter>) -> impl IntoResponse {
    Json(st.rt.work_items(&filter))
}

#[derive(Deserialize)]
struct Complete {
    #[serde(default)]
    outputs: Bindings,
}

async fn complete(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Caller(actor): Caller,
    body: axum::body::Bytes,
) -> Result<Response, ApiError> {
    let req: Complete = if body.is_empty() { Complete { outputs: Bindings::new() } } else { json_body(&body)? };
    let events = st.rt.complete_work_item(&WorkItemId::new(id), &req.outputs, &actor)?;
    Ok(Json(json!({ "events": events })).into_response())
}

async fn emr_inbound(State(st): State<AppState>, headers: HeaderMap, body: axum::body::Bytes) -> Result<Response, ApiError> {
    let content_type = header(&headers, "content-type").unwrap_or("");
    let media = content_type.split(';').next().unwrap_or("").trim();
    if !media.eq_ignore_ascii_case(HL7_CONTENT_TYPE) {
        return Err(ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            "unsupported-media-type",
            format!("expected {HL7_CONTENT_TYPE}"),
        ));
    }
    let text = String::from_utf8_lossy(&body);
    let outcome = st.rt.emr_inbound(&text);
    Ok((
        [(CONTENT_TYPE, HL7_CONTENT_TYPE.to_string()), ("x-ack-code".parse().unwrap(), format!("{:?}", outcome.code))],
        outcome.ack,
    )
        .into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Advance {
    by: Option<Duration>,
    to: Option<Instant>,
}

async fn test_advance(State(st): State<AppState>, body: axum::body::Bytes) -> Result<Response, ApiError> {
    if !st.test_mode {
        return Err(ApiError::not_found("test endpoints are disabled"));
    }
    let req: Advance = json_body(&body)?;
    if st.rt.clock_mode() != ClockMode::Virtual {
        return Err(carepath_core::runtime::RuntimeError::NotVirtual.into());
    }
    let target = match (req.by, req.to) {
        (Some(by), None) => st.rt.now() + by,
        (None, Some(to)) => to,
        _ => return Err(ApiError::bad_request("give exactly one of `by` or `to`")),
    };
    let rt = st.rt.clone();
    let fired = tokio::task::spawn_blocking(move || rt.advance_to(target))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(json!({ "now": st.rt.now(), "fired": fired })).into_response())
}
