//! Session service for steering learned projections: create a session on a
//! registered dataset, submit point moves, refit, and read back layouts,
//! metrics and per-point trajectories. Usable in process through
//! [`SessionManager`] or over HTTP through [`api::router`].

pub mod api;
mod error;
pub mod manager;
pub mod session;

pub use error::{ErrorBody, ServiceError, ServiceResult};
pub use manager::{JobState, JobStatus, OptimizeResponse, SessionManager, SessionSummary};
pub use session::{CreateSession, ScenarioKind, SessionOptions, SessionState};
