use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::Serialize;
use tablescope_core::parser::ParseError;
use tablescope_core::retrieval::RetrievalError;
use tablescope_core::ScorerError;
use thiserror::Error;

/// Every failure the service reports. `code()` is the stable wire name.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("malformed request: {0}")]
    BadRequest(String),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("a project needs at least 2 annotators, got {0}")]
    TooFewAnnotators(usize),
    #[error("project {0:?} already exists")]
    ProjectExists(String),
    #[error("no project {0:?}")]
    ProjectNotFound(String),
    #[error("annotator {0:?} is not part of this project")]
    UnknownAnnotator(String),
    #[error("header annotator {header:?} does not match body annotator {body:?}")]
    AnnotatorMismatch { header: String, body: String },
    #[error("{0}")]
    UnknownBlock(String),
    #[error("revision {got} is stale; current revision is {current}")]
    StaleRevision { got: u64, current: u64 },
    #[error("project is {0} and no longer accepts this operation")]
    ProjectClosed(&'static str),
    #[error("pair ({0}, {1}) is not in conflict")]
    NotInConflict(String, String),
    #[error("{0} unresolved conflicts remain")]
    UnresolvedConflicts(usize),
    #[error("{0}; finalize with acknowledge_warnings=true to proceed")]
    WarningsNotAcknowledged(String),
    #[error("project is not finalized")]
    NotFinalized,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("scorer protocol error: {0}")]
    ScorerProtocol(String),
    #[error("storage error: {0}")]
    Storage(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::InvalidDocument(_) => "InvalidDocument",
            ServiceError::TooFewAnnotators(_) => "TooFewAnnotators",
            ServiceError::ProjectExists(_) => "ProjectExists",
            ServiceError::ProjectNotFound(_) => "ProjectNotFound",
            ServiceError::UnknownAnnotator(_) => "UnknownAnnotator",
            ServiceError::AnnotatorMismatch { .. } => "AnnotatorMismatch",
            ServiceError::UnknownBlock(_) => "UnknownBlock",
            ServiceError::StaleRevision { .. } => "StaleRevision",
            ServiceError::ProjectClosed(_) => "ProjectClosed",
            ServiceError::NotInConflict(..) => "NotInConflict",
            ServiceError::UnresolvedConflicts(_) => "UnresolvedConflicts",
            ServiceError::WarningsNotAcknowledged(_) => "WarningsNotAcknowledged",
            ServiceError::NotFinalized => "NotFinalized",
            ServiceError::InvalidConfig(_) => "InvalidConfig",
            ServiceError::ScorerUnavailable(_) => "ScorerUnavailable",
            ServiceError::ScorerProtocol(_) => "ScorerProtocol",
            ServiceError::Storage(_) => "StorageError",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::InvalidDocument(_)
            | ServiceError::TooFewAnnotators(_)
            | ServiceError::UnknownAnnotator(_)
            | ServiceError::UnknownBlock(_)
            | ServiceError::InvalidConfig(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::AnnotatorMismatch { .. } => StatusCode::FORBIDDEN,
            ServiceError::ProjectNotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::ProjectExists(_)
            | ServiceError::StaleRevision { .. }
            | ServiceError::ProjectClosed(_)
            | ServiceError::NotInConflict(..)
            | ServiceError::UnresolvedConflicts(_)
            | ServiceError::WarningsNotAcknowledged(_)
            | ServiceError::NotFinalized => StatusCode::CONFLICT,
            ServiceError::ScorerUnavailable(_) | ServiceError::ScorerProtocol(_) => {
                StatusCode::BAD_GATEWAY
            }
            ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    detail: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code(),
            detail: self.to_string(),
        };
        crate::canonical_response(self.status(), &body)
    }
}

impl From<ScorerError> for ServiceError {
    fn from(e: ScorerError) -> Self {
        match e {
            ScorerError::Transport(m) => ServiceError::ScorerUnavailable(m),
            ScorerError::Protocol(m) | ScorerError::Reply(m) => ServiceError::ScorerProtocol(m),
            ScorerError::EmptyQuery => ServiceError::BadRequest(e.to_string()),
            ScorerError::Config(c) => ServiceError::InvalidConfig(c.0),
        }
    }
}

impl From<ParseError> for ServiceError {
    fn from(e: ParseError) -> Self {
        match e {
            ParseError::Scorer(s) => s.into(),
            ParseError::Config(c) => ServiceError::InvalidConfig(c.0),
            other => ServiceError::ScorerProtocol(other.to_string()),
        }
    }
}

impl From<RetrievalError> for ServiceError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Scorer(s) => s.into(),
            RetrievalError::ScoreCount { .. } | RetrievalError::NanScore(_) => {
                ServiceError::ScorerProtocol(e.to_string())
            }
            other => ServiceError::BadRequest(other.to_string()),
        }
    }
}

