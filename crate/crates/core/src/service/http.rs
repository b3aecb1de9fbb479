//! HTTP binding for [`SessionService`].

use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{ExportFormat, ServiceError, SessionService};
use crate::sql::{parse_dsn, ConnectionConfig, Dialect};

#[derive(Clone)]
struct AppState {
    service: Arc<SessionService>,
    token: Option<Arc<str>>,
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSession(_) | ServiceError::UnknownChart(_) => StatusCode::NOT_FOUND,
            ServiceError::TurnInProgress(_) => StatusCode::CONFLICT,
            ServiceError::UnsupportedFormat(_) => StatusCode::BAD_REQUEST,
            ServiceError::WriteAccessRequested => StatusCode::FORBIDDEN,
            ServiceError::ConnectionFailed(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::StorageFailure(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

fn error_body(status: StatusCode, code: &str, message: String) -> Response {
    (status, Json(json!({ "code": code, "message": message }))).into_response()
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        error_body(self.status(), self.code(), self.to_string())
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ServiceError::StorageFailure(format!("worker failed: {e}"))))
}

async fn create_session(State(app): State<AppState>) -> Result<impl IntoResponse, ServiceError> {
    let id = blocking(move || app.service.create_session()).await?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

#[derive(Deserialize)]
struct MessageBody {
    text: String,
}

async fn post_message(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<MessageBody>,
) -> Result<impl IntoResponse, ServiceError> {
    let bundle = blocking(move || app.service.post_message(&id, &body.text)).await?;
    Ok(Json(bundle))
}

async fn get_state(State(app): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let view = blocking(move || app.service.get_state(&id)).await?;
    Ok(Json(view))
}

/// `dialect` may be omitted when `location` is a DSN with a scheme.
#[derive(Deserialize)]
struct ConnectionBody {
    dialect: Option<String>,
    location: String,
    #[serde(default)]
    read_only: Option<bool>,
}

impl ConnectionBody {
    fn into_config(self) -> Result<ConnectionConfig, ServiceError> {
        let mut config = match self.dialect {
            Some(d) => {
                let dialect = Dialect::parse(&d)
                    .ok_or_else(|| ServiceError::ConnectionFailed(format!("unknown dialect {d}")))?;
                ConnectionConfig { dialect, location: self.location, read_only: true }
            }
            None => parse_dsn(&self.location)?,
        };
        if let Some(ro) = self.read_only {
            config.read_only = ro;
        }
        Ok(config)
    }
}

async fn register_connection(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<ConnectionBody>,
) -> Result<impl IntoResponse, ServiceError> {
    let summary = blocking(move || {
        let config = body.into_config()?;
        app.service.register_connection(&id, config)
    })
    .await?;
    Ok(Json(summary))
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export_chart(
    State(app): State<AppState>,
    Path((id, chart_id)): Path<(String, String)>,
    Query(q): Query<ExportQuery>,
) -> Result<impl IntoResponse, ServiceError> {
    let format = ExportFormat::parse(q.format.as_deref().unwrap_or("json"))?;
    let body = blocking(move || app.service.export_chart(&id, &chart_id, format)).await?;
    Ok(([(header::CONTENT_TYPE, format.content_type())], body))
}

async fn require_token(State(app): State<AppState>, headers: HeaderMap, req: Request, next: Next) -> Response {
    if let Some(token) = &app.token {
        let presented = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_ref()) {
            return error_body(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or wrong bearer token".into());
        }
    }
    next.run(req).await
}

/// Routes:
///
/// - `POST /sessions`
/// - `POST /sessions/{id}/messages` with `{"text": ...}`
/// - `GET /sessions/{id}/state`
/// - `POST /sessions/{id}/connections` with `{"dialect", "location", "read_only"}`
/// - `GET /sessions/{id}/charts/{chart_id}/export?format=json|csv`
///
/// With a token every request needs `Authorization: Bearer <token>`.
pub fn router(service: Arc<SessionService>, token: Option<String>) -> Router {
    let app = AppState { service, token: token.map(Arc::from) };
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/connections", post(register_connection))
        .route("/sessions/{id}/charts/{chart_id}/export", get(export_chart))
        .layer(middleware::from_fn_with_state(app.clone(), require_token))
        .with_state(app)
}

pub async fn serve(addr: &str, service: Arc<SessionService>, token: Option<String>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(service, token))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
