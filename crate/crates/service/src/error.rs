use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] simembed::Error),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown job `{0}`")]
    UnknownJob(String),
    #[error("step {step} is outside the session history of {steps} layouts")]
    StepOutOfRange { step: usize, steps: usize },
    #[error("snapshot version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl From<serde_json::Error> for ServiceError {
    fn from(e: serde_json::Error) -> Self {
        ServiceError::Core(e.into())
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Core(e.into())
    }
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Core(e) => e.code(),
            ServiceError::UnknownSession(_) => "UnknownSession",
            ServiceError::UnknownJob(_) => "UnknownJob",
            ServiceError::StepOutOfRange { .. } => "StepOutOfRange",
            ServiceError::VersionMismatch { .. } => "VersionMismatch",
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::Internal(_) => "InternalError",
        }
    }

    /// Structured context for clients; `null` when the message says it all.
    pub fn detail(&self) -> Value {
        use simembed::Error as E;
        match self {
            ServiceError::Core(E::NonFiniteLoss { iteration, trace }) => {
                json!({ "iteration": iteration, "loss_trace": trace })
            }
            ServiceError::Core(E::IndexOutOfRange { index, len }) => json!({ "index": index, "len": len }),
            ServiceError::Core(E::DuplicateIndex(i)) | ServiceError::Core(E::NotControlPoint(i)) => {
                json!({ "index": i })
            }
            ServiceError::Core(E::CountOutOfRange { count, min, max }) => {
                json!({ "count": count, "min": min, "max": max })
            }
            ServiceError::Core(E::Parse { line, column, .. }) => json!({ "line": line, "column": column }),
            ServiceError::StepOutOfRange { step, steps } => json!({ "step": step, "steps": steps }),
            ServiceError::VersionMismatch { found, expected } => json!({ "found": found, "expected": expected }),
            _ => Value::Null,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
            detail: self.detail(),
        }
    }
}

/// Wire form of every error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

pub type ServiceResult<T> = Result<T, ServiceError>;
