use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::Serialize;
use serde_json::json;

use cuechart_core::catalog::{CatalogError, TransformError};
use cuechart_core::orchestrator::RoundError;
use cuechart_core::session::{now_ms, SessionError};

/// Success body: `{ok: true, data, serverTimeMs}`.
pub fn envelope<T: Serialize>(data: T) -> Response {
    let body = json!({"ok": true, "data": data, "serverTimeMs": now_ms()});
    (StatusCode::OK, axum::Json(body)).into_response()
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
        }
    }

    fn unprocessable(code: &str, message: String) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "ok": false,
            "error": {"code": self.code, "message": self.message},
            "serverTimeMs": now_ms(),
        });
        (self.status, axum::Json(body)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::UnknownSession(_)
            | SessionError::UnknownRound(_)
            | SessionError::UnknownCandidate(_)
            | SessionError::UnknownDataset(_) => StatusCode::NOT_FOUND,
            SessionError::Log { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl From<RoundError> for ApiError {
    fn from(e: RoundError) -> Self {
        match e {
            RoundError::Session(e) => e.into(),
            RoundError::RoundInFlight(_) => Self::new(StatusCode::CONFLICT, e.code(), e.to_string()),
            // The model backend failed or kept answering off-contract.
            RoundError::StageFailed { .. } => Self::new(StatusCode::BAD_GATEWAY, e.code(), e.to_string()),
            RoundError::InsufficientContext | RoundError::RoundEmpty(_) => Self::unprocessable(e.code(), e.to_string()),
        }
    }
}

impl From<CatalogError> for ApiError {
    fn from(e: CatalogError) -> Self {
        let status = match e {
            CatalogError::UnknownDataset(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl From<TransformError> for ApiError {
    fn from(e: TransformError) -> Self {
        Self::unprocessable(e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::unprocessable("InvalidRequest", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::unprocessable("InvalidRequest", e.body_text())
    }
}
