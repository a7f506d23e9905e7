use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use carepath_core::dsl::DslError;
use carepath_core::engine::EngineError;
use carepath_core::runtime::RuntimeError;
use carepath_core::scheduler::SchedulerError;
use serde_json::json;

/// An error response: status plus a JSON body with `error` and `message`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthenticated", "X-Actor and X-Role headers are required")
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(detail) = self.detail {
            body["detail"] = detail;
        }
        (self.status, Json(body)).into_response()
    }
}

fn engine_status(e: &EngineError) -> (StatusCode, &'static str) {
    use EngineError::*;
    match e {
        CaseNotRunning(_) => (StatusCode::CONFLICT, "case-not-running"),
        StaleWorkItem { .. } => (StatusCode::CONFLICT, "stale-work-item"),
        AlreadyAnswered(_) => (StatusCode::CONFLICT, "already-answered"),
        SurveyNotActive(_) => (StatusCode::CONFLICT, "survey-not-active"),
        UnknownWorkItem(_) => (StatusCode::NOT_FOUND, "unknown-work-item"),
        UnknownQuestion(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown-question"),
        UnknownOption { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "unknown-option"),
        MissingOutput { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "missing-output"),
        UnexpectedOutput { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "unexpected-output"),
        InvalidValue { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "invalid-value"),
        UnknownDataItem(_) | NotAnEmrItem(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown-data-item"),
        UnknownTimer(_) => (StatusCode::CONFLICT, "unknown-timer"),
        Scheduler(_) => (StatusCode::INTERNAL_SERVER_ERROR, "scheduler"),
    }
}

impl From<RuntimeError> for ApiError {
    fn from(e: RuntimeError) -> Self {
        let message = e.to_string();
        match e {
            RuntimeError::Parse(ref p) => {
                let (line, column) = p.location();
                let mut err = ApiError::new(StatusCode::BAD_REQUEST, "parse", message);
                err.detail = Some(json!({ "line": line, "column": column, "kind": dsl_kind(p) }));
                err
            }
            RuntimeError::Invalid(report) => {
                let mut err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", "guideline failed validation");
                err.detail = Some(serde_json::to_value(&report).expect("report serializes"));
                err
            }
            RuntimeError::UnknownGuideline(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown-guideline", message),
            RuntimeError::UnknownCase(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown-case", message),
            RuntimeError::UnknownWorkItem(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown-work-item", message),
            RuntimeError::Forbidden { .. } => ApiError::new(StatusCode::FORBIDDEN, "forbidden", message),
            RuntimeError::Engine(ref inner) => {
                let (status, code) = engine_status(inner);
                ApiError::new(status, code, message)
            }
            RuntimeError::Scheduler(SchedulerError::ClockRegression { .. }) => {
                ApiError::new(StatusCode::CONFLICT, "clock-regression", message)
            }
            RuntimeError::Hl7(_) => ApiError::new(StatusCode::BAD_REQUEST, "hl7", message),
            RuntimeError::NotVirtual => ApiError::new(StatusCode::CONFLICT, "not-virtual", message),
            RuntimeError::Log(_) | RuntimeError::Scheduler(_) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
            }
        }
    }
}

fn dsl_kind(e: &DslError) -> &'static str {
    match e {
        DslError::Syntax { .. } => "syntax",
        DslError::DuplicateKey { .. } => "duplicate-key",
        DslError::UnknownTaskKind { .. } => "unknown-task-kind",
        DslError::Schema { .. } => "schema",
    }
}
