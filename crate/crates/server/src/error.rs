use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use fhirlit_core::fhir::FhirError;
use fhirlit_core::summarizer::SummarizeError;
use serde::Serialize;

/// Machine-readable error codes. This list is the complete set the API
/// returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    MalformedDocument,
    NoPatient,
    MultiplePatients,
    InvalidPatient,
    TooLarge,
    PatientNotFound,
    ResourceNotFound,
    SessionNotFound,
    SessionBusy,
    BackendError,
    InvalidRequest,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 12] = [
        ErrorCode::MalformedDocument,
        ErrorCode::NoPatient,
        ErrorCode::MultiplePatients,
        ErrorCode::InvalidPatient,
        ErrorCode::TooLarge,
        ErrorCode::PatientNotFound,
        ErrorCode::ResourceNotFound,
        ErrorCode::SessionNotFound,
        ErrorCode::SessionBusy,
        ErrorCode::BackendError,
        ErrorCode::InvalidRequest,
        ErrorCode::Internal,
    ];

    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::MalformedDocument | ErrorCode::InvalidRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NoPatient | ErrorCode::MultiplePatients | ErrorCode::InvalidPatient => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ErrorCode::TooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            ErrorCode::PatientNotFound | ErrorCode::ResourceNotFound | ErrorCode::SessionNotFound => {
                StatusCode::NOT_FOUND
            }
            ErrorCode::SessionBusy => StatusCode::CONFLICT,
            ErrorCode::BackendError => StatusCode::BAD_GATEWAY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    pub status: u16,
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            status: code.status().as_u16(),
            code,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<FhirError> for ApiError {
    fn from(e: FhirError) -> Self {
        let code = match e {
            FhirError::MalformedDocument(_) => ErrorCode::MalformedDocument,
            FhirError::NoPatient => ErrorCode::NoPatient,
            FhirError::MultiplePatients(_) => ErrorCode::MultiplePatients,
            FhirError::IncompletePatient(_) | FhirError::InvalidDate(_) => ErrorCode::InvalidPatient,
        };
        Self::new(code, e.to_string())
    }
}

impl From<SummarizeError> for ApiError {
    fn from(e: SummarizeError) -> Self {
        match e {
            SummarizeError::Backend(e) => Self::new(ErrorCode::BackendError, e.to_string()),
            SummarizeError::Cache(e) => Self::internal(e.to_string()),
        }
    }
}
