//! Shared application state: sessions, checkpoints, chat backend, journal.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use aigate::approx::Checkpoint;
use aigate::domain::TaskSpec;
use aigate::gate::{Condition, GateDecider, SessionEvent};
use aigate::policy::NetworkPolicy;
use aigate::Config;
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use chrono::{DateTime, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::chat::ChatBackend;
use crate::error::ApiError;
use crate::session::SessionRecord;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Settable clock for tests and offline tools.
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self(Mutex::new(start))
    }

    pub fn advance(&self, by: chrono::Duration) {
        *self.0.lock().unwrap() += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}

/// One line of the append-only session journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum JournalEntry {
    Create {
        id: String,
        condition: Condition,
        checkpoint: Option<String>,
        at: DateTime<Utc>,
    },
    Event {
        id: String,
        ts: DateTime<Utc>,
        at: DateTime<Utc>,
        event: SessionEvent,
    },
    Chat {
        id: String,
        ts: DateTime<Utc>,
        at: DateTime<Utc>,
        message: String,
        reply: String,
    },
}

struct Journal {
    path: PathBuf,
    file: Mutex<File>,
}

impl Journal {
    fn append(&self, entry: &JournalEntry) -> Result<(), ApiError> {
        let mut line = serde_json::to_string(entry).expect("journal entry serializes");
        line.push('\n');
        let mut file = self.file.lock().unwrap();
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| ApiError::Internal(format!("journal {}: {e}", self.path.display())))
    }
}

pub type SessionHandle = Arc<tokio::sync::Mutex<SessionRecord>>;

pub struct AppState {
    sessions: Mutex<HashMap<String, SessionHandle>>,
    checkpoints: HashMap<String, NetworkPolicy>,
    default_checkpoint: Option<String>,
    tasks: TaskSpec,
    tick_seconds: f64,
    idle_timeout: chrono::Duration,
    journal_path: Option<PathBuf>,
    journal: Option<Journal>,
    pub chat: ChatBackend,
    pub clock: Arc<dyn Clock>,
}

impl AppState {
    pub fn new(cfg: &Config) -> Result<Self, ApiError> {
        cfg.validate()?;
        let chat = ChatBackend::from_config(&cfg.server.chat).map_err(ApiError::Configuration)?;
        Ok(Self {
            sessions: Mutex::new(HashMap::new()),
            checkpoints: HashMap::new(),
            default_checkpoint: None,
            tasks: cfg.tasks.clone(),
            tick_seconds: cfg.reward.tick_seconds,
            idle_timeout: chrono::Duration::milliseconds((cfg.server.session_idle_timeout_seconds * 1000.0) as i64),
            journal_path: cfg.server.journal_path.as_ref().map(PathBuf::from),
            journal: None,
            chat,
            clock: Arc::new(SystemClock),
        })
    }

    /// Registers a checkpoint under `name`; the first one becomes the default.
    pub fn with_checkpoint(mut self, name: &str, checkpoint: &Checkpoint, cfg: &Config) -> Result<Self, ApiError> {
        let policy = NetworkPolicy::new(checkpoint.net.clone(), cfg.training.features)?;
        self.checkpoints.insert(name.to_string(), policy);
        self.default_checkpoint.get_or_insert_with(|| name.to_string());
        Ok(self)
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_journal(mut self, path: impl Into<PathBuf>) -> Self {
        self.journal_path = Some(path.into());
        self
    }

    /// Replays the journal (if any) and opens it for appending.
    pub fn start(mut self) -> Result<Arc<Self>, ApiError> {
        if let Some(path) = self.journal_path.clone() {
            if path.exists() {
                self.recover(&path)?;
            }
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| ApiError::Configuration(format!("journal {}: {e}", path.display())))?;
            self.journal = Some(Journal {
                path,
                file: Mutex::new(file),
            });
        }
        Ok(Arc::new(self))
    }

    fn recover(&mut self, path: &Path) -> Result<(), ApiError> {
        let file = File::open(path).map_err(|e| ApiError::Configuration(format!("journal {}: {e}", path.display())))?;
        let mut sessions: HashMap<String, SessionRecord> = HashMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ApiError::Configuration(format!("journal {}: {e}", path.display())))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: JournalEntry = match serde_json::from_str(&line) {
                Ok(e) => e,
                Err(e) => {
                    // A torn final line from a crash mid-write.
                    tracing::warn!(line = n + 1, error = %e, "skipping unreadable journal line");
                    continue;
                }
            };
            let outcome = match entry {
                JournalEntry::Create {
                    id,
                    condition,
                    checkpoint,
                    at,
                } => self
                    .new_record(id.clone(), condition, checkpoint, at)
                    .map(|r| {
                        sessions.insert(id, r);
                    }),
                JournalEntry::Event { id, ts, at, event } => match sessions.get_mut(&id) {
                    Some(r) => r.apply(ts, event, at).map(|_| ()),
                    None => Ok(()),
                },
                JournalEntry::Chat {
                    id,
                    ts,
                    at,
                    message,
                    reply,
                } => match sessions.get_mut(&id) {
                    Some(r) => r.record_chat(ts, message, reply, at),
                    None => Ok(()),
                },
            };
            if let Err(e) = outcome {
                tracing::warn!(line = n + 1, error = %e, "journal entry could not be re-applied");
            }
        }
        let now = self.clock.now();
        let map = self.sessions.get_mut().unwrap();
        for (id, record) in sessions {
            if now - record.last_activity <= self.idle_timeout {
                map.insert(id, Arc::new(tokio::sync::Mutex::new(record)));
            }
        }
        tracing::info!(sessions = map.len(), "recovered sessions from journal");
        Ok(())
    }

    pub fn journal(&self, entry: JournalEntry) -> Result<(), ApiError> {
        match &self.journal {
            Some(j) => j.append(&entry),
            None => Ok(()),
        }
    }

    pub fn decider(&self, condition: Condition, checkpoint: Option<&str>) -> Result<(GateDecider, Option<String>), ApiError> {
        match condition {
            Condition::Always => Ok((GateDecider::Always, None)),
            Condition::Never => Ok((GateDecider::Never, None)),
            Condition::Rl => {
                let name = checkpoint
                    .map(str::to_string)
                    .or_else(|| self.default_checkpoint.clone())
                    .ok_or_else(|| ApiError::Configuration("rl sessions need a loaded checkpoint".into()))?;
                let policy = self
                    .checkpoints
                    .get(&name)
                    .ok_or_else(|| ApiError::Configuration(format!("unknown checkpoint {name:?}")))?;
                Ok((GateDecider::Network(policy.clone()), Some(name)))
            }
        }
    }

    fn new_record(
        &self,
        id: String,
        condition: Condition,
        checkpoint: Option<String>,
        now: DateTime<Utc>,
    ) -> Result<SessionRecord, ApiError> {
        let (decider, checkpoint) = self.decider(condition, checkpoint.as_deref())?;
        SessionRecord::new(id, decider, checkpoint, self.tasks.clone(), self.tick_seconds, now)
    }

    pub fn create_session(&self, condition: Condition, checkpoint: Option<&str>) -> Result<SessionHandle, ApiError> {
        let now = self.clock.now();
        let id = new_session_id();
        let record = self.new_record(id.clone(), condition, checkpoint.map(str::to_string), now)?;
        self.journal(JournalEntry::Create {
            id: id.clone(),
            condition,
            checkpoint: record.checkpoint.clone(),
            at: now,
        })?;
        let handle = Arc::new(tokio::sync::Mutex::new(record));
        self.sessions.lock().unwrap().insert(id, handle.clone());
        Ok(handle)
    }

    /// Looks up a live session, evicting it if it has been idle too long.
    pub async fn session(&self, id: &str) -> Result<SessionHandle, ApiError> {
        let handle = self
            .sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_string()))?;
        let idle = self.clock.now() - handle.lock().await.last_activity;
        if idle > self.idle_timeout {
            self.sessions.lock().unwrap().remove(id);
            return Err(ApiError::NotFound(format!("{id} (expired)")));
        }
        Ok(handle)
    }

    /// Drops every session idle for longer than the timeout.
    pub async fn sweep_expired(&self) -> usize {
        let handles: Vec<(String, SessionHandle)> = self
            .sessions
            .lock()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let now = self.clock.now();
        let mut removed = 0;
        for (id, h) in handles {
            if now - h.lock().await.last_activity > self.idle_timeout {
                self.sessions.lock().unwrap().remove(&id);
                removed += 1;
            }
        }
        removed
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }
}

/// 128 random bits, url-safe base64 without padding (22 characters).
pub fn new_session_id() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    URL_SAFE_NO_PAD.encode(bytes)
}
