use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use hagp_api::ApiError;

#[derive(Debug)]
pub enum ServiceError {
    NotFound(String),
    BadRequest { status: StatusCode, message: String },
    Core(hagp_core::Error),
    Internal(String),
}

impl ServiceError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        ServiceError::BadRequest { status: StatusCode::BAD_REQUEST, message: message.into() }
    }

    fn parts(&self) -> (StatusCode, &'static str, String) {
        use hagp_core::Error as E;
        match self {
            ServiceError::NotFound(m) => (StatusCode::NOT_FOUND, "not_found", m.clone()),
            ServiceError::BadRequest { status, message } => (*status, "invalid_request", message.clone()),
            ServiceError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m.clone()),
            ServiceError::Core(e) => {
                let kind = match e {
                    E::Config(_) => "config",
                    E::Numeric(_) | E::NonFinite(_) | E::Initialization(_) => "numeric",
                    E::Shape(_) => "shape",
                    E::NotPsd { .. } => "not_psd",
                    E::Centring(_) => "centring",
                    E::TooLarge { .. } => "too_large",
                    E::UnknownTerm(_) => "unknown_term",
                    E::InvalidTerms(_) => "invalid_terms",
                    E::Ingest(_) | E::Csv(_) => "ingest",
                    E::Impute(_) => "impute",
                    E::Boundary(_) => "boundary",
                    E::Request { .. } => "invalid_effect_request",
                    E::Io(_) => "io",
                };
                let status = if matches!(e, E::Io(_)) { StatusCode::INTERNAL_SERVER_ERROR } else { StatusCode::UNPROCESSABLE_ENTITY };
                (status, kind, e.to_string())
            }
        }
    }
}

impl From<hagp_core::Error> for ServiceError {
    fn from(e: hagp_core::Error) -> Self {
        ServiceError::Core(e)
    }
}

impl From<JsonRejection> for ServiceError {
    fn from(r: JsonRejection) -> Self {
        ServiceError::BadRequest { status: r.status(), message: r.body_text() }
    }
}

impl From<tokio::task::JoinError> for ServiceError {
    fn from(e: tokio::task::JoinError) -> Self {
        ServiceError::Internal(format!("worker task failed: {e}"))
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, kind, error) = self.parts();
        if status.is_server_error() {
            tracing::error!(%error, "request failed");
        }
        (status, Json(ApiError { error, kind: kind.into() })).into_response()
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;
