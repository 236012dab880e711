//! JSON-over-HTTP routes, all under `/v1`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, FromRequestParts, Path, Request, State};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use crate::error::ServiceError;
use crate::manager::SessionManager;
use crate::session::{CreateSession, SubmitManipulation};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        use simembed::Error as E;
        let status = match &self {
            ServiceError::UnknownSession(_) | ServiceError::UnknownJob(_) | ServiceError::Core(E::UnknownDataset(_)) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::Core(E::Io(_)) | ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::BadRequest(_)
            | ServiceError::VersionMismatch { .. }
            | ServiceError::Core(E::Json(_))
            | ServiceError::Core(E::Parse { .. }) => StatusCode::BAD_REQUEST,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        (status, Json(self.body())).into_response()
    }
}

/// JSON body whose rejections use the service error format.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T>
where
    Json<T>: FromRequest<S, Rejection = JsonRejection>,
{
    type Rejection = ServiceError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| ApiJson(v))
            .map_err(|e| ServiceError::BadRequest(e.body_text()))
    }
}

/// Query string whose rejections use the service error format.
pub struct ApiQuery<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for ApiQuery<T> {
    type Rejection = ServiceError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        axum::extract::Query::<T>::from_request_parts(parts, state)
            .await
            .map(|q| ApiQuery(q.0))
            .map_err(|e: QueryRejection| ServiceError::BadRequest(e.body_text()))
    }
}

type Shared = State<Arc<SessionManager>>;
type ApiResult<T> = Result<Json<T>, ServiceError>;

#[derive(Deserialize)]
struct StepQuery {
    step: Option<usize>,
}

#[derive(Deserialize)]
struct TrajectoryQuery {
    from: usize,
    to: usize,
}

#[derive(Deserialize)]
struct OptimizeQuery {
    #[serde(default)]
    sync: bool,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SnapshotRequest {
    path: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RestoreRequest {
    path: PathBuf,
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/v1/datasets", get(datasets))
        .route("/v1/sessions", get(list_sessions).post(create_session))
        .route("/v1/sessions/restore", post(restore))
        .route("/v1/sessions/{id}", get(session))
        .route("/v1/sessions/{id}/layout", get(layout))
        .route("/v1/sessions/{id}/manipulation", post(submit))
        .route("/v1/sessions/{id}/optimize", post(optimize))
        .route("/v1/sessions/{id}/metrics", get(metrics))
        .route("/v1/sessions/{id}/trajectories", get(trajectories))
        .route("/v1/sessions/{id}/audit", get(audit))
        .route("/v1/sessions/{id}/snapshot", post(snapshot))
        .route("/v1/jobs/{job_id}", get(job))
        .fallback(|| async { ServiceError::BadRequest("no such endpoint".into()).into_response_with(StatusCode::NOT_FOUND) })
        .with_state(manager)
}

impl ServiceError {
    fn into_response_with(self, status: StatusCode) -> Response {
        let mut body = self.body();
        if status == StatusCode::NOT_FOUND {
            body.code = "NotFound".into();
        }
        (status, Json(body)).into_response()
    }
}

async fn datasets(State(m): Shared) -> Json<serde_json::Value> {
    Json(json!({ "datasets": m.datasets() }))
}

async fn list_sessions(State(m): Shared) -> Json<serde_json::Value> {
    Json(json!({ "sessions": m.list_sessions() }))
}

async fn create_session(State(m): Shared, ApiJson(req): ApiJson<CreateSession>) -> Result<Response, ServiceError> {
    let summary = m.create_session(req).await?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn session(State(m): Shared, Path(id): Path<String>) -> ApiResult<crate::manager::SessionSummary> {
    Ok(Json(m.summary(&id)?))
}

async fn layout(
    State(m): Shared,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<StepQuery>,
) -> ApiResult<crate::manager::LayoutResponse> {
    Ok(Json(m.layout(&id, q.step)?))
}

async fn submit(
    State(m): Shared,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<SubmitManipulation>,
) -> ApiResult<serde_json::Value> {
    let accepted = m.submit_manipulation(&id, req.moves).await?;
    Ok(Json(json!({ "session_id": id, "accepted": accepted })))
}

async fn optimize(
    State(m): Shared,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<OptimizeQuery>,
) -> Result<Response, ServiceError> {
    if q.sync {
        return Ok(Json(m.optimize(&id).await?).into_response());
    }
    let job_id = m.start_optimize(&id)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "session_id": id, "job_id": job_id }))).into_response())
}

async fn job(State(m): Shared, Path(job_id): Path<String>) -> ApiResult<crate::manager::JobStatus> {
    Ok(Json(m.job(&job_id)?))
}

async fn metrics(
    State(m): Shared,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<StepQuery>,
) -> ApiResult<simembed::metrics::MetricReport> {
    Ok(Json(m.metrics(&id, q.step)?))
}

async fn trajectories(
    State(m): Shared,
    Path(id): Path<String>,
    ApiQuery(q): ApiQuery<TrajectoryQuery>,
) -> ApiResult<crate::session::Trajectories> {
    Ok(Json(m.trajectories(&id, q.from, q.to)?))
}

async fn audit(State(m): Shared, Path(id): Path<String>) -> ApiResult<serde_json::Value> {
    Ok(Json(json!({ "session_id": id, "entries": m.audit(&id)? })))
}

async fn snapshot(
    State(m): Shared,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> ApiResult<crate::manager::SnapshotInfo> {
    // the body is optional
    let req: SnapshotRequest = if body.iter().all(u8::is_ascii_whitespace) {
        SnapshotRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(e.to_string()))?
    };
    Ok(Json(m.snapshot(&id, req.path).await?))
}

async fn restore(State(m): Shared, ApiJson(req): ApiJson<RestoreRequest>) -> Result<Response, ServiceError> {
    let summary = m.restore(req.path).await?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}
