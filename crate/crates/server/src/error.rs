use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

/// Uniform error body: `{"error": code, "detail": text}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("session not found: {0}")]
    NotFound(String),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("out-of-order event: {0}")]
    Ordering(String),
    #[error("out of sequence: {0}")]
    Sequencing(String),
    #[error("the assistant is not available for this task")]
    GateClosed,
    #[error("chat backend unavailable: {detail}")]
    Upstream { detail: String, retry_after_seconds: u64 },
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::NotFound(_) => "not_found",
            ApiError::BadRequest(_) => "invalid_request",
            ApiError::Configuration(_) => "configuration",
            ApiError::Ordering(_) => "out_of_order",
            ApiError::Sequencing(_) => "sequencing",
            ApiError::GateClosed => "gate_closed",
            ApiError::Upstream { .. } => "upstream_unavailable",
            ApiError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) | ApiError::Configuration(_) => StatusCode::BAD_REQUEST,
            ApiError::Ordering(_) | ApiError::Sequencing(_) => StatusCode::CONFLICT,
            ApiError::GateClosed => StatusCode::FORBIDDEN,
            ApiError::Upstream { .. } => StatusCode::BAD_GATEWAY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            error: self.code().into(),
            detail: self.to_string(),
        }
    }
}

impl From<aigate::Error> for ApiError {
    fn from(e: aigate::Error) -> Self {
        use aigate::Error as E;
        match e {
            E::Ordering { .. } => ApiError::Ordering(e.to_string()),
            E::Sequencing(_) => ApiError::Sequencing(e.to_string()),
            E::IncompatibleCheckpoint(_) | E::CorruptCheckpoint(_) | E::VersionMismatch { .. } => {
                ApiError::Configuration(e.to_string())
            }
            e if e.is_validation() => ApiError::BadRequest(e.to_string()),
            e => ApiError::Internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut response = (self.status(), Json(self.body())).into_response();
        if let ApiError::Upstream {
            retry_after_seconds, ..
        } = self
        {
            response
                .headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(retry_after_seconds));
        }
        response
    }
}
