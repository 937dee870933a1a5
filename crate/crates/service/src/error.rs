use svgreuse_core::lmm::LmmError;
use svgreuse_core::report::ValidationReport;
use thiserror::Error;

use crate::session::Stage;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown checkpoint {0}")]
    UnknownCheckpoint(u64),
    #[error("cannot {action} while the session is {stage}")]
    InvalidTransition { action: &'static str, stage: Stage },
    #[error("{message}")]
    Invalid { message: String, report: Option<ValidationReport> },
    #[error(transparent)]
    Provider(#[from] LmmError),
    #[error("the model's proposals were rejected")]
    Rejected(ValidationReport),
    #[error("storage error: {0}")]
    Storage(#[from] std::io::Error),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn invalid(message: impl Into<String>) -> Self {
        ServiceError::Invalid { message: message.into(), report: None }
    }

    pub fn status(&self) -> u16 {
        match self {
            ServiceError::UnknownSession(_) | ServiceError::UnknownCheckpoint(_) => 404,
            ServiceError::InvalidTransition { .. } => 409,
            ServiceError::Invalid { .. } => 400,
            ServiceError::Provider(_) | ServiceError::Rejected(_) => 502,
            ServiceError::Storage(_) | ServiceError::Internal(_) => 500,
        }
    }

    pub fn report(&self) -> Option<&ValidationReport> {
        match self {
            ServiceError::Invalid { report, .. } => report.as_ref(),
            ServiceError::Rejected(r) => Some(r),
            _ => None,
        }
    }
}
