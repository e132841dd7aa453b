//! The closed set of API error codes and their HTTP statuses and exit codes.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::{json, Value};
use thematic_core::embeddings::EmbedError;
use thematic_core::orchestrator::OrchestratorError;
use thematic_core::providers::ProviderError;
use thematic_core::ranking::RankError;
use thematic_core::sessions::SessionError;
use thematic_core::store::StoreError;
use thematic_core::themes::ThemeError;

/// Families of errors. Each maps to one process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Config,
    Provider,
    NotFound,
    Conflict,
    Storage,
    Internal,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Validation => 1,
            ErrorClass::Config => 2,
            ErrorClass::Provider => 3,
            ErrorClass::NotFound => 4,
            ErrorClass::Conflict => 5,
            ErrorClass::Storage => 6,
            ErrorClass::Internal => 7,
        }
    }
}

macro_rules! codes {
    ($($variant:ident => $code:literal, $status:ident, $class:ident;)*) => {
        /// Stable error codes. Adding one is a versioned API change.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
        #[serde(rename_all = "snake_case")]
        pub enum ErrorCode {
            $($variant,)*
        }

        impl ErrorCode {
            pub const ALL: &'static [ErrorCode] = &[$(ErrorCode::$variant,)*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(ErrorCode::$variant => $code,)*
                }
            }

            pub fn status(self) -> StatusCode {
                match self {
                    $(ErrorCode::$variant => StatusCode::$status,)*
                }
            }

            pub fn class(self) -> ErrorClass {
                match self {
                    $(ErrorCode::$variant => ErrorClass::$class,)*
                }
            }
        }
    };
}

codes! {
    BadRequest => "bad_request", BAD_REQUEST, Validation;
    InvalidImage => "invalid_image", BAD_REQUEST, Validation;
    Unauthorized => "unauthorized", UNAUTHORIZED, Validation;
    SessionNotFound => "session_not_found", NOT_FOUND, NotFound;
    UnknownAxis => "unknown_axis", NOT_FOUND, NotFound;
    UnknownImage => "unknown_image", NOT_FOUND, NotFound;
    NotFound => "not_found", NOT_FOUND, NotFound;
    MethodNotAllowed => "method_not_allowed", METHOD_NOT_ALLOWED, Validation;
    DuplicateTheme => "duplicate_theme", CONFLICT, Conflict;
    SessionDeleted => "session_deleted", CONFLICT, Conflict;
    PayloadTooLarge => "payload_too_large", PAYLOAD_TOO_LARGE, Validation;
    PositionOutOfRange => "position_out_of_range", UNPROCESSABLE_ENTITY, Validation;
    ValidationFailed => "validation_failed", UNPROCESSABLE_ENTITY, Validation;
    EmptyExtraction => "empty_extraction", UNPROCESSABLE_ENTITY, Validation;
    NoThemesFound => "no_themes_found", UNPROCESSABLE_ENTITY, Validation;
    ThemeLimitReached => "theme_limit_reached", UNPROCESSABLE_ENTITY, Validation;
    ProviderUnavailable => "provider_unavailable", BAD_GATEWAY, Provider;
    ProviderRefused => "provider_refused", BAD_GATEWAY, Provider;
    ProviderContractViolation => "provider_contract_violation", BAD_GATEWAY, Provider;
    FixtureMiss => "fixture_miss", BAD_GATEWAY, Provider;
    ClassificationIncomplete => "classification_incomplete", BAD_GATEWAY, Provider;
    IncompleteAxis => "incomplete_axis", BAD_GATEWAY, Provider;
    EmbeddingSpaceMismatch => "embedding_space_mismatch", BAD_GATEWAY, Provider;
    MissingBaseDescription => "missing_base_description", BAD_GATEWAY, Provider;
    GeneratorUnavailable => "generator_unavailable", BAD_GATEWAY, Provider;
    GeneratorRefused => "generator_refused", BAD_GATEWAY, Provider;
    ProvidersUnhealthy => "providers_unhealthy", SERVICE_UNAVAILABLE, Provider;
    ConfigInvalid => "config_invalid", INTERNAL_SERVER_ERROR, Config;
    StorageUnavailable => "storage_unavailable", INTERNAL_SERVER_ERROR, Storage;
    CorruptRecord => "corrupt_record", INTERNAL_SERVER_ERROR, Storage;
    Internal => "internal", INTERNAL_SERVER_ERROR, Internal;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), details: None }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.code.class().exit_code()
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code.as_str(), self.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<ProviderError> for ApiError {
    fn from(e: ProviderError) -> Self {
        let message = e.to_string();
        match e {
            ProviderError::Unavailable { kind, attempts, .. } => ApiError::new(ErrorCode::ProviderUnavailable, message)
                .with_details(json!({ "provider": kind.as_str(), "attempts": attempts })),
            ProviderError::FixtureMiss { operation, fingerprint } => ApiError::new(ErrorCode::FixtureMiss, message)
                .with_details(json!({ "operation": operation, "fingerprint": fingerprint })),
            ProviderError::ContractViolation { kind, .. } => ApiError::new(ErrorCode::ProviderContractViolation, message)
                .with_details(json!({ "provider": kind.as_str() })),
            ProviderError::Refused { kind, .. } => {
                ApiError::new(ErrorCode::ProviderRefused, message).with_details(json!({ "provider": kind.as_str() }))
            }
            ProviderError::InvalidRequest { .. } => ApiError::new(ErrorCode::Internal, message),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::SessionNotFound(_) => ApiError::new(ErrorCode::SessionNotFound, message),
            StoreError::CorruptRecord { .. } => ApiError::new(ErrorCode::CorruptRecord, message),
            StoreError::BlobMissing(_) => ApiError::new(ErrorCode::CorruptRecord, message),
            StoreError::Unavailable { .. } => ApiError::new(ErrorCode::StorageUnavailable, message),
            StoreError::InvalidSession(_) => ApiError::new(ErrorCode::Internal, message),
        }
    }
}

impl From<ThemeError> for ApiError {
    fn from(e: ThemeError) -> Self {
        let message = e.to_string();
        match e {
            ThemeError::Provider(p) => p.into(),
            ThemeError::EmptyExtraction => ApiError::new(ErrorCode::EmptyExtraction, message),
            ThemeError::NoThemesFound => ApiError::new(ErrorCode::NoThemesFound, message)
                .with_details(json!({ "hint": "add a theme to the image manually" })),
            ThemeError::ClassificationIncomplete { missing } => {
                ApiError::new(ErrorCode::ClassificationIncomplete, message).with_details(json!({ "missing": missing }))
            }
            ThemeError::IncompleteAxis { theme, got, partial } => ApiError::new(ErrorCode::IncompleteAxis, message)
                .with_details(json!({ "theme": theme, "got": got, "partial": partial })),
            ThemeError::InvalidRequest(_) => ApiError::new(ErrorCode::ValidationFailed, message),
            ThemeError::Storage(s) => s.into(),
        }
    }
}

impl From<EmbedError> for ApiError {
    fn from(e: EmbedError) -> Self {
        let message = e.to_string();
        match e {
            EmbedError::Provider(p) => p.into(),
            EmbedError::SpaceMismatch { .. } => ApiError::new(ErrorCode::EmbeddingSpaceMismatch, message),
            EmbedError::EmptyLabel { .. } => ApiError::new(ErrorCode::Internal, message),
            EmbedError::Storage(s) => s.into(),
        }
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        let message = e.to_string();
        match e {
            OrchestratorError::UnknownAxis(id) => {
                ApiError::new(ErrorCode::UnknownAxis, message).with_details(json!({ "axis_id": id }))
            }
            OrchestratorError::UnknownImage(id) => {
                ApiError::new(ErrorCode::UnknownImage, message).with_details(json!({ "image_id": id }))
            }
            OrchestratorError::PositionOutOfRange(p) => {
                ApiError::new(ErrorCode::PositionOutOfRange, message).with_details(json!({ "position": p }))
            }
            OrchestratorError::InvalidRequest(_) => ApiError::new(ErrorCode::ValidationFailed, message),
            OrchestratorError::Embedding(e) => e.into(),
            OrchestratorError::Ranking(RankError::SpaceMismatch { .. } | RankError::DimensionMismatch { .. }) => {
                ApiError::new(ErrorCode::EmbeddingSpaceMismatch, message)
            }
            OrchestratorError::Ranking(_) => ApiError::new(ErrorCode::ProviderContractViolation, message),
            OrchestratorError::MissingBaseDescription { .. } => {
                ApiError::new(ErrorCode::MissingBaseDescription, message)
            }
            OrchestratorError::GeneratorUnavailable(_) => ApiError::new(ErrorCode::GeneratorUnavailable, message),
            OrchestratorError::GeneratorRefused(reason) => {
                ApiError::new(ErrorCode::GeneratorRefused, message).with_details(json!({ "provider_message": reason }))
            }
            OrchestratorError::Template(_) => ApiError::new(ErrorCode::Internal, message),
            OrchestratorError::Storage(s) => s.into(),
            OrchestratorError::InvalidSession(_) => ApiError::new(ErrorCode::Internal, message),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        match e {
            SessionError::NotFound(id) => {
                ApiError::new(ErrorCode::SessionNotFound, message).with_details(json!({ "session_id": id }))
            }
            SessionError::Cancelled(_) => ApiError::new(ErrorCode::SessionDeleted, message),
            SessionError::DuplicateTheme(_) => ApiError::new(ErrorCode::DuplicateTheme, message),
            SessionError::ThemeLimit(max) => {
                ApiError::new(ErrorCode::ThemeLimitReached, message).with_details(json!({ "max_themes": max }))
            }
            SessionError::Theme(t) => t.into(),
            SessionError::Orchestrator(o) => o.into(),
            SessionError::Storage(s) => s.into(),
        }
    }
}
