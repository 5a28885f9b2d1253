//! JSON over HTTP. Handlers run on the blocking pool since the pipeline
//! makes blocking model calls and engine queries.

use std::path::Path;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tower_http::services::ServeDir;

use crate::service::{ApiError, AppState, CohortRequest, QueryRequest, VizRequest};

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let code = StatusCode::from_u16(self.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (code, Json(self.body())).into_response()
    }
}

type Shared = State<Arc<AppState>>;

async fn blocking<T, F>(state: Arc<AppState>, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce(&AppState) -> Result<T, ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&state)).await {
        Ok(Ok(body)) => Json(body).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::Internal(e.to_string()).into_response(),
    }
}

fn body<T>(b: Result<Json<T>, JsonRejection>) -> Result<T, Response> {
    b.map(|Json(t)| t)
        .map_err(|e| ApiError::BadRequest(e.body_text()).into_response())
}

async fn query(State(s): Shared, req: Result<Json<QueryRequest>, JsonRejection>) -> Response {
    match body(req) {
        Ok(req) => blocking(s, move |s| s.handle_query(req)).await,
        Err(r) => r,
    }
}

async fn visualize(State(s): Shared, req: Result<Json<VizRequest>, JsonRejection>) -> Response {
    match body(req) {
        Ok(req) => blocking(s, move |s| s.handle_visualize(req)).await,
        Err(r) => r,
    }
}

async fn cohort_flow(State(s): Shared, req: Result<Json<CohortRequest>, JsonRejection>) -> Response {
    match body(req) {
        Ok(req) => blocking(s, move |s| s.handle_cohort_flow(req)).await,
        Err(r) => r,
    }
}

async fn schema(State(s): Shared, UrlPath(db): UrlPath<String>) -> Response {
    match s.handle_schema(&db) {
        Ok(b) => Json(b).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn history(State(s): Shared, UrlPath(id): UrlPath<String>) -> Response {
    match s.handle_history(&id) {
        Ok(b) => Json(b).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn info(State(s): Shared) -> Response {
    Json(s.info()).into_response()
}

async fn not_found() -> Response {
    ApiError::NotFound("no such endpoint".into()).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/info", get(info))
        .route("/api/query", post(query))
        .route("/api/visualize", post(visualize))
        .route("/api/cohort-flow", post(cohort_flow))
        .route("/api/schema/{db}", get(schema))
        .route("/api/session/{id}/history", get(history))
        .route("/api/{*rest}", get(not_found).post(not_found))
        .with_state(state)
}

/// API routes plus the built web client, if one is given.
pub fn app(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = router(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
