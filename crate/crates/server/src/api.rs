//! HTTP routes.

use std::sync::Arc;

use aigate::gate::{Condition, GateStatus, SessionEvent};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::session::SessionExport;
use crate::store::{AppState, JournalEntry};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub condition: Condition,
    #[serde(default)]
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
    pub condition: Condition,
    pub ai_allowed: bool,
    pub task: usize,
    pub question: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    AnswerSubmitted,
    Heartbeat,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventRequest {
    #[serde(rename = "type")]
    pub kind: EventKind,
    #[serde(default)]
    pub question_id: Option<String>,
    #[serde(default)]
    pub correct: Option<bool>,
    pub ts: DateTime<Utc>,
}

impl EventRequest {
    fn event(self) -> Result<(DateTime<Utc>, SessionEvent), ApiError> {
        let event = match self.kind {
            EventKind::Heartbeat => SessionEvent::Heartbeat,
            EventKind::AnswerSubmitted => SessionEvent::AnswerSubmitted {
                question_id: self
                    .question_id
                    .ok_or_else(|| ApiError::BadRequest("answer_submitted needs question_id".into()))?,
                correct: self
                    .correct
                    .ok_or_else(|| ApiError::BadRequest("answer_submitted needs correct".into()))?,
            },
        };
        Ok((self.ts, event))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateResponse {
    pub ai_allowed: bool,
    pub task: usize,
    pub question: usize,
    pub finished: bool,
}

impl From<GateStatus> for GateResponse {
    fn from(s: GateStatus) -> Self {
        Self {
            ai_allowed: s.ai_allowed,
            task: s.task,
            question: s.question,
            finished: s.finished,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub message: String,
    /// Client time of the message; defaults to the server clock.
    #[serde(default)]
    pub ts: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub reply: String,
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::BadRequest(e.body_text()))
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<CreateSessionResponse>), ApiError> {
    let req = body(payload)?;
    let handle = state.create_session(req.condition, req.checkpoint.as_deref())?;
    let record = handle.lock().await;
    let status = record.status();
    tracing::info!(session = %record.id, condition = %req.condition, "session created");
    Ok((
        StatusCode::CREATED,
        Json(CreateSessionResponse {
            session_id: record.id.clone(),
            condition: req.condition,
            ai_allowed: status.ai_allowed,
            task: status.task,
            question: status.question,
        }),
    ))
}

async fn ingest_event(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<EventRequest>, JsonRejection>,
) -> Result<Json<GateResponse>, ApiError> {
    let (ts, event) = body(payload)?.event()?;
    let handle = state.session(&id).await?;
    let mut record = handle.lock().await;
    let now = state.clock.now();
    let status = record.apply(ts, event.clone(), now)?;
    state.journal(JournalEntry::Event { id, ts, at: now, event })?;
    Ok(Json(status.into()))
}

async fn query_gate(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<GateResponse>, ApiError> {
    let handle = state.session(&id).await?;
    let status = handle.lock().await.status();
    Ok(Json(status.into()))
}

async fn chat(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<ChatRequest>, JsonRejection>,
) -> Result<Json<ChatResponse>, ApiError> {
    let req = body(payload)?;
    if req.message.trim().is_empty() {
        return Err(ApiError::BadRequest("message must not be empty".into()));
    }
    let handle = state.session(&id).await?;
    // Held across the backend call so the session's operations stay serialized.
    let mut record = handle.lock().await;
    let now = state.clock.now();
    let ts = match (req.ts, record.last_event_ts()) {
        (Some(ts), _) => ts,
        (None, Some(last)) => now.max(last),
        (None, None) => now,
    };
    if let Some(last) = record.last_event_ts() {
        if ts < last {
            return Err(ApiError::Ordering(format!("chat at {ts} precedes the previous event at {last}")));
        }
    }
    if !record.chat_allowed_at(ts)? {
        return Err(ApiError::GateClosed);
    }
    let reply = state.chat.reply(&record.chat_history(), &req.message).await.map_err(|e| {
        tracing::warn!(session = %id, error = %e, "chat backend failed");
        ApiError::Upstream {
            retry_after_seconds: e.retry_after_seconds(),
            detail: e.to_string(),
        }
    })?;
    record.record_chat(ts, req.message.clone(), reply.clone(), now)?;
    state.journal(JournalEntry::Chat {
        id,
        ts,
        at: now,
        message: req.message,
        reply: reply.clone(),
    })?;
    Ok(Json(ChatResponse { reply }))
}

async fn export(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionExport>, ApiError> {
    let handle = state.session(&id).await?;
    let doc = handle.lock().await.export();
    Ok(Json(doc))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn not_found() -> ApiError {
    ApiError::NotFound("no such route".into())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/events", post(ingest_event))
        .route("/sessions/{id}/gate", get(query_gate))
        .route("/sessions/{id}/chat", post(chat))
        .route("/sessions/{id}/export", get(export))
        .fallback(not_found)
        .with_state(state)
}
