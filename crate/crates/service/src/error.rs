use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

/// JSON error body: `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub code: String,
    pub message: String,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ApiErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, detail: serde_json::Value) -> Self {
        Self {
            status,
            body: ApiErrorBody {
                code: code.to_string(),
                message: message.into(),
                detail,
            },
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message, serde_json::Value::Null)
    }

    pub fn session_not_found(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "session_not_found",
            format!("no session with id {id}"),
            serde_json::json!({ "session_id": id }),
        )
    }

    pub fn checkpoint_not_found(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "checkpoint_not_found",
            format!("no checkpoint named {id}"),
            serde_json::json!({ "checkpoint": id }),
        )
    }

    pub fn model_mismatch(checkpoint_model: &str, requested: &str) -> Self {
        Self::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "model_mismatch",
            format!("checkpoint holds a {checkpoint_model} policy but {requested} was requested"),
            serde_json::json!({ "checkpoint_model": checkpoint_model, "requested": requested }),
        )
    }

    pub fn invalid_checkpoint(id: &str, reason: impl Into<String>) -> Self {
        let reason = reason.into();
        Self::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_checkpoint",
            format!("checkpoint {id} cannot be loaded: {reason}"),
            serde_json::json!({ "checkpoint": id, "reason": reason }),
        )
    }

    pub fn invalid_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", message, serde_json::Value::Null)
    }

    pub fn invalid_outcome(message: impl Into<String>, support: String) -> Self {
        Self::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_outcome",
            message,
            serde_json::json!({ "valid_range": support }),
        )
    }

    pub fn session_done(id: &str, horizon: usize) -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "session_done",
            format!("session {id} has finished all {horizon} experiments; no design is pending"),
            serde_json::json!({ "session_id": id, "horizon": horizon }),
        )
    }

    pub fn simulation_unavailable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "simulation_unavailable", message, serde_json::Value::Null)
    }

    pub fn low_ess(ess: f64, n_particles: usize) -> Self {
        Self::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "low_effective_sample_size",
            format!("effective sample size {ess:.2} is below 5; create the session with a larger n_particles (currently {n_particles})"),
            serde_json::json!({ "ess": ess, "n_particles": n_particles }),
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message, serde_json::Value::Null)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
