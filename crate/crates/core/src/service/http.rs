//! JSON-over-HTTP front of [`ExplainService`].
//!
//! ```text
//! GET  /api/predictions
//! GET  /api/explanations/{row_id}?method=<lime|shap>-<simplified|detailed>
//! GET  /api/scenario
//! GET  /api/health
//! POST /api/refresh
//! GET  /*            static UI bundle, when a directory is configured
//! ```
//!
//! Errors are `{"error": <code>, "detail": <message>}` with the matching
//! status code.

use std::collections::HashMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{any, get, post};
use axum::{Json, Router};
use serde_json::json;
use tower_http::services::ServeDir;

use super::{ExplainService, ServiceError};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = json!({ "error": self.code(), "detail": self.to_string() });
        (status, Json(body)).into_response()
    }
}

type Shared = Arc<ExplainService>;

pub fn router(service: Shared, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/predictions", get(predictions))
        .route("/api/explanations/{row_id}", get(explanation))
        .route("/api/scenario", get(scenario))
        .route("/api/health", get(health))
        .route("/api/refresh", post(refresh))
        .route("/api/{*rest}", any(api_not_found))
        .with_state(service);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn predictions(State(svc): State<Shared>) -> Result<Response, ServiceError> {
    Ok(Json(svc.get_predictions()?).into_response())
}

async fn explanation(
    State(svc): State<Shared>,
    Path(row_id): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Response, ServiceError> {
    let method = query.get("method").cloned().unwrap_or_default();
    // Validate cheap inputs before spending a blocking thread.
    let method_parsed = method
        .parse::<crate::explanation::ExplanationMethod>()
        .map_err(|e| ServiceError::UnknownMethod(e.to_string()))?;
    let row = row_id
        .parse::<usize>()
        .map_err(|_| ServiceError::RowNotFound(row_id.clone()))?;
    let payload = tokio::task::spawn_blocking(move || svc.get_explanation(row, method_parsed))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "application/json")], payload.to_string()).into_response())
}

async fn scenario(State(svc): State<Shared>) -> Response {
    Json(svc.get_scenario().clone()).into_response()
}

async fn health(State(svc): State<Shared>) -> Response {
    Json(svc.health()).into_response()
}

async fn refresh(State(svc): State<Shared>) -> Result<Response, ServiceError> {
    let svc2 = Arc::clone(&svc);
    tokio::task::spawn_blocking(move || svc2.refresh())
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    Ok(Json(svc.health()).into_response())
}

async fn api_not_found() -> Response {
    let body = json!({ "error": "not_found", "detail": "no such endpoint" });
    (StatusCode::NOT_FOUND, Json(body)).into_response()
}

/// Serves `app` on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}
