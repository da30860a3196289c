use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use clxai_core::Error as CoreError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    Validation,
    BudgetExceeded,
    WrongPhase,
    NotFound,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::Validation => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::BudgetExceeded | ErrorCode::WrongPhase => StatusCode::CONFLICT,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Validation, message)
    }

    pub fn not_found(session_id: &str) -> Self {
        Self::new(ErrorCode::NotFound, format!("no session {session_id:?}"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let message = e.to_string();
        match e {
            CoreError::BudgetExceeded { cost, budget } => Self {
                code: ErrorCode::BudgetExceeded,
                message,
                detail: Some(serde_json::json!({ "cost": cost, "budget": budget })),
            },
            CoreError::WrongPhase { command, phase } => Self {
                code: ErrorCode::WrongPhase,
                message,
                detail: Some(serde_json::json!({ "command": command, "phase": phase })),
            },
            CoreError::RangeViolation(_)
            | CoreError::Validation(_)
            | CoreError::Constraint(_)
            | CoreError::Empty(_)
            | CoreError::SubspaceTooLarge(_)
            | CoreError::Json(_) => Self::validation(message),
            CoreError::Corruption(_)
            | CoreError::WorldDegenerate(_)
            | CoreError::ModelDegenerate
            | CoreError::Io(_)
            | CoreError::Csv(_) => {
                tracing::error!(error = %message, "internal error");
                Self::internal(message)
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
