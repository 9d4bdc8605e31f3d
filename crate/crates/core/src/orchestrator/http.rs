//! JSON HTTP API.
//!
//! | method | path           | body / query                | success                                          |
//! |--------|----------------|-----------------------------|--------------------------------------------------|
//! | POST   | `/api/message` | `{user_id, platform, content}` | `{reply, favorability, tier, record_id}`      |
//! | GET    | `/api/history` | `?user_id=&limit=`          | `{records: [...]}`                               |
//! | GET    | `/api/state`   | `?user_id=`                 | `{favorability, tier, last_platform, message_count}` |
//! | GET    | `/api/health`  |                             | `{status: "ok"}`                                 |
//!
//! Invalid input answers 422 (400 for unparseable JSON), a failed backend
//! call 503 with `retryable: true`, a storage failure 500.

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::cors::CorsLayer;

use super::{InboundMessage, Orchestrator, TurnError};
use crate::domain::{DialogueRecord, Platform, RecordId, Tier, UserId};

pub const DEFAULT_HISTORY_LIMIT: usize = 50;

#[derive(Debug, Deserialize)]
pub struct MessageRequest {
    pub user_id: String,
    pub platform: Platform,
    pub content: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct MessageResponse {
    pub reply: String,
    pub favorability: u8,
    pub tier: Tier,
    pub record_id: RecordId,
}

#[derive(Debug, Deserialize)]
pub struct HistoryQuery {
    pub user_id: String,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HistoryResponse {
    pub records: Vec<DialogueRecord>,
}

#[derive(Debug, Deserialize)]
pub struct StateQuery {
    pub user_id: String,
}

pub struct ApiError {
    status: StatusCode,
    message: String,
    retryable: bool,
}

impl ApiError {
    fn unprocessable(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: message.into(),
            retryable: false,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.message, "retryable": self.retryable });
        (self.status, Json(body)).into_response()
    }
}

impl From<TurnError> for ApiError {
    fn from(err: TurnError) -> Self {
        match err {
            TurnError::Invalid(_) | TurnError::InvalidLimit(_) => {
                Self::unprocessable(err.to_string())
            }
            TurnError::Backend { ref source, .. } => {
                tracing::warn!(error = %source, "backend call failed");
                Self {
                    status: StatusCode::SERVICE_UNAVAILABLE,
                    message: "the NPC cannot answer right now; your message was kept, try again"
                        .into(),
                    retryable: true,
                }
            }
            TurnError::Store(ref source) => {
                tracing::error!(error = %source, "store failure");
                Self {
                    status: StatusCode::INTERNAL_SERVER_ERROR,
                    message: "storage failure".into(),
                    retryable: false,
                }
            }
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        Self {
            status: rejection.status(),
            message: rejection.body_text(),
            retryable: false,
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(rejection: QueryRejection) -> Self {
        Self::unprocessable(rejection.body_text())
    }
}

fn user_id(raw: &str) -> Result<UserId, ApiError> {
    UserId::new(raw).map_err(|e| ApiError::unprocessable(e.to_string()))
}

async fn post_message(
    State(orch): State<Arc<Orchestrator>>,
    body: Result<Json<MessageRequest>, JsonRejection>,
) -> Result<Json<MessageResponse>, ApiError> {
    let Json(req) = body?;
    let msg =
        InboundMessage::new(&req.user_id, req.platform, &req.content).map_err(TurnError::from)?;
    let reply = orch.handle_message(msg).await?;
    Ok(Json(MessageResponse {
        reply: reply.content,
        favorability: reply.favorability,
        tier: reply.tier,
        record_id: reply.record_id,
    }))
}

async fn get_history(
    State(orch): State<Arc<Orchestrator>>,
    query: Result<Query<HistoryQuery>, QueryRejection>,
) -> Result<Json<HistoryResponse>, ApiError> {
    let Query(q) = query?;
    let user = user_id(&q.user_id)?;
    let records = orch.get_history(&user, q.limit.unwrap_or(DEFAULT_HISTORY_LIMIT))?;
    Ok(Json(HistoryResponse { records }))
}

async fn get_state(
    State(orch): State<Arc<Orchestrator>>,
    query: Result<Query<StateQuery>, QueryRejection>,
) -> Result<Json<super::UserState>, ApiError> {
    let Query(q) = query?;
    let user = user_id(&q.user_id)?;
    Ok(Json(orch.get_state(&user)?))
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(orchestrator: Arc<Orchestrator>) -> Router {
    Router::new()
        .route("/api/message", post(post_message))
        .route("/api/history", get(get_history))
        .route("/api/state", get(get_state))
        .route("/api/health", get(health))
        // the browser client is served from its own origin
        .layer(CorsLayer::permissive())
        .with_state(orchestrator)
}

/// Serves the API until `shutdown` resolves, then flushes the store.
pub async fn serve(
    listener: TcpListener,
    orchestrator: Arc<Orchestrator>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let store = Arc::clone(orchestrator.store());
    axum::serve(listener, router(orchestrator))
        .with_graceful_shutdown(shutdown)
        .await?;
    store.flush().map_err(std::io::Error::other)
}
