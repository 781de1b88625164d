//! Per-session state, export documents and offline replay.

use aigate::domain::TaskSpec;
use aigate::gate::{Condition, GateDecider, GateDecision, GateSession, GateStatus, SessionEvent};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::chat::{ChatMessage, Role};
use crate::error::ApiError;

pub const EXPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub ts: DateTime<Utc>,
    /// Milliseconds since session creation (never negative).
    pub elapsed_ms: u64,
    #[serde(flatten)]
    pub event: SessionEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub ts: DateTime<Utc>,
    pub role: Role,
    pub content: String,
}

/// Full JSON export of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionExport {
    pub version: u32,
    pub session_id: String,
    pub condition: Condition,
    pub checkpoint: Option<String>,
    pub created_at: DateTime<Utc>,
    pub last_activity: DateTime<Utc>,
    pub tick_seconds: f64,
    pub tasks: TaskSpec,
    pub events: Vec<EventRecord>,
    pub decisions: Vec<GateDecision>,
    pub transcript: Vec<ChatTurn>,
    pub status: GateStatus,
    /// Whether the assistant was used in each task reached so far.
    pub ai_used: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub id: String,
    pub checkpoint: Option<String>,
    pub created_at: DateTime<Utc>,
    pub last_activity: DateTime<Utc>,
    tick_seconds: f64,
    tasks: TaskSpec,
    gate: GateSession,
    events: Vec<EventRecord>,
    transcript: Vec<ChatTurn>,
}

pub fn elapsed_ms(created_at: DateTime<Utc>, ts: DateTime<Utc>) -> u64 {
    (ts - created_at).num_milliseconds().max(0) as u64
}

impl SessionRecord {
    pub fn new(
        id: String,
        decider: GateDecider,
        checkpoint: Option<String>,
        tasks: TaskSpec,
        tick_seconds: f64,
        now: DateTime<Utc>,
    ) -> Result<Self, ApiError> {
        let gate = GateSession::new(tasks.clone(), tick_seconds, decider)?;
        Ok(Self {
            id,
            checkpoint,
            created_at: now,
            last_activity: now,
            tick_seconds,
            tasks,
            gate,
            events: Vec::new(),
            transcript: Vec::new(),
        })
    }

    pub fn condition(&self) -> Condition {
        self.gate.condition()
    }

    pub fn status(&self) -> GateStatus {
        self.gate.status()
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn transcript(&self) -> &[ChatTurn] {
        &self.transcript
    }

    /// Whether an assistant request at `ts` would be admitted.
    pub fn chat_allowed_at(&self, ts: DateTime<Utc>) -> Result<bool, ApiError> {
        Ok(self.gate.allowed_at(elapsed_ms(self.created_at, ts))?)
    }

    pub fn last_event_ts(&self) -> Option<DateTime<Utc>> {
        self.events.last().map(|e| e.ts)
    }

    /// Applies a timestamped event; rejected events change nothing.
    pub fn apply(&mut self, ts: DateTime<Utc>, event: SessionEvent, now: DateTime<Utc>) -> Result<GateStatus, ApiError> {
        if let Some(last) = self.last_event_ts() {
            if ts < last {
                return Err(ApiError::Ordering(format!(
                    "timestamp {} precedes the previous event at {}",
                    ts.to_rfc3339(),
                    last.to_rfc3339()
                )));
            }
        }
        let elapsed_ms = elapsed_ms(self.created_at, ts);
        let status = self.gate.ingest(elapsed_ms, &event)?;
        self.events.push(EventRecord { ts, elapsed_ms, event });
        self.last_activity = now;
        Ok(status)
    }

    /// Records a completed assistant exchange as an AI-use event.
    pub fn record_chat(&mut self, ts: DateTime<Utc>, message: String, reply: String, now: DateTime<Utc>) -> Result<(), ApiError> {
        self.apply(ts, SessionEvent::Chat, now)?;
        self.transcript.push(ChatTurn {
            ts,
            role: Role::User,
            content: message,
        });
        self.transcript.push(ChatTurn {
            ts,
            role: Role::Assistant,
            content: reply,
        });
        Ok(())
    }

    /// Transcript in backend message form.
    pub fn chat_history(&self) -> Vec<ChatMessage> {
        self.transcript
            .iter()
            .map(|t| ChatMessage {
                role: t.role.clone(),
                content: t.content.clone(),
            })
            .collect()
    }

    pub fn export(&self) -> SessionExport {
        let progress = self.gate.progress();
        let mut ai_used = progress.history().to_vec();
        if !progress.finished() {
            ai_used.push(progress.gate_open() && progress.ai_used_in_task());
        }
        SessionExport {
            version: EXPORT_VERSION,
            session_id: self.id.clone(),
            condition: self.condition(),
            checkpoint: self.checkpoint.clone(),
            created_at: self.created_at,
            last_activity: self.last_activity,
            tick_seconds: self.tick_seconds,
            tasks: self.tasks.clone(),
            events: self.events.clone(),
            decisions: self.gate.decisions().to_vec(),
            transcript: self.transcript.clone(),
            status: self.status(),
            ai_used,
        }
    }
}

/// Re-runs an exported event stream through a fresh decision core and
/// returns the resulting decision sequence.
pub fn replay(export: &SessionExport, decider: GateDecider) -> aigate::Result<Vec<GateDecision>> {
    let mut gate = GateSession::new(export.tasks.clone(), export.tick_seconds, decider)?;
    for e in &export.events {
        gate.ingest(elapsed_ms(export.created_at, e.ts), &e.event)?;
    }
    Ok(gate.decisions().to_vec())
}
