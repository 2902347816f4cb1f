//! Uniform error envelope: `{code, message, path?, report?}`.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use cal_core::config::{ConfigError, ValidationReport};
use cal_core::metrics::MetricsError;
use cal_core::rules::RuleError;
use cal_core::store::StoreError;
use cal_core::wizard::{RegistryError, WizardError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ValidationReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code,
                message: message.into(),
                path: None,
                report: None,
            },
        }
    }

    pub fn with_path(mut self, path: impl Into<String>) -> Self {
        self.body.path = Some(path.into());
        self
    }

    pub fn code(&self) -> &'static str {
        self.body.code
    }

    pub fn missing_identity() -> Self {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "MISSING_IDENTITY",
            "the X-Annotator-Id header is required",
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.body.code, "{}", self.body.message);
        }
        (self.status, Json(self.body)).into_response()
    }
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        match &e {
            ConfigError::Syntax { .. } => {
                ApiError::new(StatusCode::BAD_REQUEST, "SYNTAX_ERROR", e.to_string()).with_path("$")
            }
            ConfigError::Schema { path, message } => {
                ApiError::new(StatusCode::BAD_REQUEST, "SCHEMA_ERROR", message.clone()).with_path(path.clone())
            }
        }
    }
}

impl From<RuleError> for ApiError {
    fn from(e: RuleError) -> Self {
        let (status, code) = match &e {
            RuleError::DisabledOption { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "DISABLED_OPTION"),
            RuleError::HiddenCategory { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "HIDDEN_CATEGORY"),
            RuleError::Contradiction { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "RULE_CONTRADICTION"),
            RuleError::InvalidValue { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "INVALID_VALUE"),
            RuleError::UnknownCategory { .. } => (StatusCode::NOT_FOUND, "CATEGORY_NOT_FOUND"),
            RuleError::UnknownOption { .. } => (StatusCode::NOT_FOUND, "OPTION_NOT_FOUND"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<MetricsError> for ApiError {
    fn from(e: MetricsError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "METRICS_UNAVAILABLE", e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        use StatusCode as S;
        let message = e.to_string();
        match e {
            StoreError::Io(_) | StoreError::Json(_) | StoreError::Corrupt { .. } => ApiError::internal(message),
            StoreError::Config(c) => c.into(),
            StoreError::Invalid(report) => {
                let mut err = ApiError::new(S::BAD_REQUEST, "SCHEMA_ERROR", message);
                err.body.path = report.errors.first().map(|f| f.path.clone());
                err.body.report = Some(report);
                err
            }
            StoreError::Format { path, message } => {
                ApiError::new(S::BAD_REQUEST, "FORMAT_ERROR", message).with_path(path)
            }
            StoreError::DuplicateProject { .. } | StoreError::DuplicateId { .. } => {
                ApiError::new(S::CONFLICT, "DUPLICATE_ID", message)
            }
            StoreError::ProjectNotFound { .. } => ApiError::new(S::NOT_FOUND, "PROJECT_NOT_FOUND", message),
            StoreError::ConversationNotFound { .. } => {
                ApiError::new(S::NOT_FOUND, "CONVERSATION_NOT_FOUND", message)
            }
            StoreError::UtteranceNotFound { .. } => ApiError::new(S::NOT_FOUND, "UTTERANCE_NOT_FOUND", message),
            StoreError::CategoryNotFound { .. } => ApiError::new(S::NOT_FOUND, "CATEGORY_NOT_FOUND", message),
            StoreError::OptionNotFound { .. } => ApiError::new(S::NOT_FOUND, "OPTION_NOT_FOUND", message),
            StoreError::NotAMember { .. } => ApiError::new(S::FORBIDDEN, "NOT_A_MEMBER", message),
            StoreError::VersionConflict { .. } => ApiError::new(S::CONFLICT, "VERSION_CONFLICT", message),
            StoreError::Rule(r) => r.into(),
            StoreError::Metrics(m) => m.into(),
        }
    }
}

impl From<WizardError> for ApiError {
    fn from(e: WizardError) -> Self {
        let message = e.to_string();
        match e {
            WizardError::NoWizard { .. } => ApiError::new(StatusCode::NOT_FOUND, "NO_WIZARD", message),
            WizardError::Finished => ApiError::new(StatusCode::CONFLICT, "FINISHED", message),
            WizardError::AtRoot => ApiError::new(StatusCode::CONFLICT, "AT_ROOT", message),
            WizardError::Rule(r) => r.into(),
        }
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::NotFound => {
                ApiError::new(StatusCode::NOT_FOUND, "SESSION_NOT_FOUND", "no such wizard session")
            }
            RegistryError::Expired => {
                ApiError::new(StatusCode::GONE, "SESSION_EXPIRED", "the wizard session has expired")
            }
        }
    }
}
