//! Event-driven gate decisions for live sessions.
//!
//! A [`GateSession`] consumes timestamped learner events and decides, on the
//! same tick grid as the simulator, whether the assistant is available.
//! Times are milliseconds since session creation. Time on task is measured
//! on the tick grid: an event at `t` is seen at `⌊t / tick⌋·tick`, so clock
//! skew only coarsens the observation.
//!
//! An event at `t` is applied at its boundary `b = ⌊t / tick⌋·tick`, as the
//! simulator scores an answer at the end of the tick it completes in.
//! Decisions are taken
//! - at every boundary of the current task before `b`, using the state
//!   before the event, and
//! - at `b` itself after the event is applied; an assistant request is
//!   checked against the decision at `b`.
//!
//! Decisions stop once the current task's gate is open; a new task starts
//! closed and is decided immediately at its first boundary. Replaying the
//! same event stream through a fresh session reproduces the decision
//! sequence exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{Action, GateObservation, TaskSpec};
use crate::error::{Error, Result};
use crate::policy::NetworkPolicy;
use crate::progress::{AnswerOutcome, Progress};

/// Experimental condition of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Rl,
    Always,
    Never,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Rl => "rl",
            Condition::Always => "always",
            Condition::Never => "never",
        })
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rl" => Ok(Condition::Rl),
            "always" => Ok(Condition::Always),
            "never" => Ok(Condition::Never),
            _ => Err(Error::validation("condition", format!("unknown condition {s:?}"))),
        }
    }
}

/// The decision function behind a session.
#[derive(Debug, Clone)]
pub enum GateDecider {
    Always,
    Never,
    Network(NetworkPolicy),
}

impl GateDecider {
    pub fn condition(&self) -> Condition {
        match self {
            GateDecider::Always => Condition::Always,
            GateDecider::Never => Condition::Never,
            GateDecider::Network(_) => Condition::Rl,
        }
    }

    pub fn decide(&self, obs: &GateObservation) -> Result<Action> {
        match self {
            GateDecider::Always => Ok(Action::Allow),
            GateDecider::Never => Ok(Action::Deny),
            GateDecider::Network(p) => p.decide(obs),
        }
    }
}

/// What happened, without its timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    AnswerSubmitted { question_id: String, correct: bool },
    Heartbeat,
    /// A successful assistant exchange while the gate was open.
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    /// Session time of the decision, on the tick grid.
    pub at_ms: u64,
    pub observation: GateObservation,
    pub action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateStatus {
    pub ai_allowed: bool,
    pub task: usize,
    pub question: usize,
    pub finished: bool,
}

#[derive(Debug, Clone)]
pub struct GateSession {
    tasks: TaskSpec,
    tick_ms: u64,
    decider: GateDecider,
    progress: Progress,
    task_start_ms: u64,
    /// Last tick boundary of the current task already decided.
    decided_through_ms: Option<u64>,
    last_event_ms: u64,
    decisions: Vec<GateDecision>,
}

impl GateSession {
    /// Starts at task 0 and takes the first decision at time 0.
    pub fn new(tasks: TaskSpec, tick_seconds: f64, decider: GateDecider) -> Result<Self> {
        tasks.validate()?;
        let tick_ms = (tick_seconds * 1000.0).round() as u64;
        if tick_ms == 0 {
            return Err(Error::validation("reward.tick_seconds", "tick must be at least 1 ms"));
        }
        let mut session = Self {
            tasks,
            tick_ms,
            decider,
            progress: Progress::new(0.0),
            task_start_ms: 0,
            decided_through_ms: None,
            last_event_ms: 0,
            decisions: Vec::new(),
        };
        session.decide_at(0)?;
        Ok(session)
    }

    pub fn condition(&self) -> Condition {
        self.decider.condition()
    }

    pub fn decisions(&self) -> &[GateDecision] {
        &self.decisions
    }

    pub fn progress(&self) -> &Progress {
        &self.progress
    }

    pub fn status(&self) -> GateStatus {
        GateStatus {
            ai_allowed: self.progress.gate_open() && !self.progress.finished(),
            task: self.progress.task(),
            question: self.progress.question(),
            finished: self.progress.finished(),
        }
    }

    /// Observation as of session time `at_ms`.
    pub fn observation(&self, at_ms: u64) -> GateObservation {
        let t = self.quantize(at_ms).saturating_sub(self.task_start_ms);
        self.progress.observation_with_time(t as f64 / 1000.0)
    }

    fn quantize(&self, at_ms: u64) -> u64 {
        at_ms / self.tick_ms * self.tick_ms
    }

    fn deciding(&self) -> bool {
        !self.progress.gate_open() && !self.progress.finished()
    }

    fn decide_at(&mut self, boundary_ms: u64) -> Result<()> {
        if !self.deciding() {
            return Ok(());
        }
        let observation = self.observation(boundary_ms);
        let action = self.decider.decide(&observation)?;
        if action == Action::Allow {
            self.progress.open_gate();
        }
        self.decisions.push(GateDecision {
            at_ms: boundary_ms,
            observation,
            action,
        });
        self.decided_through_ms = Some(boundary_ms);
        Ok(())
    }

    /// Decides every not-yet-decided tick boundary strictly before `until_ms`.
    fn catch_up(&mut self, until_ms: u64) -> Result<()> {
        let mut next = match self.decided_through_ms {
            Some(b) => b + self.tick_ms,
            None => self.task_start_ms,
        };
        while next < until_ms && self.deciding() {
            self.decide_at(next)?;
            next += self.tick_ms;
        }
        Ok(())
    }

    /// Whether the assistant is available to an event at `at_ms`, counting
    /// the boundaries that event would reveal. Does not change the session.
    pub fn allowed_at(&self, at_ms: u64) -> Result<bool> {
        if self.progress.gate_open() {
            return Ok(true);
        }
        if self.progress.finished() {
            return Ok(false);
        }
        let now = self.quantize(at_ms.max(self.last_event_ms));
        let mut next = match self.decided_through_ms {
            Some(b) => b + self.tick_ms,
            None => self.task_start_ms,
        };
        while next <= now {
            if self.decider.decide(&self.observation(next))? == Action::Allow {
                return Ok(true);
            }
            next += self.tick_ms;
        }
        Ok(false)
    }

    /// Checks an answer's target against the unlocked question.
    fn check_question(&self, question_id: &str) -> Result<()> {
        if self.progress.finished() {
            return Err(Error::Sequencing("all tasks are already complete".into()));
        }
        let (task, question) = (self.progress.task(), self.progress.question());
        let expected = self.tasks.item_id(task, question).unwrap_or_default();
        if question_id == expected {
            return Ok(());
        }
        let known = self
            .tasks
            .tasks
            .iter()
            .any(|t| t.item_ids.iter().any(|id| id == question_id));
        if known {
            Err(Error::Sequencing(format!(
                "question {question_id:?} is not the unlocked question {expected:?}"
            )))
        } else {
            Err(Error::validation("question_id", format!("unknown question {question_id:?}")))
        }
    }

    /// Applies one event at session time `at_ms` and returns the new status.
    ///
    /// Rejected events leave the session unchanged.
    pub fn ingest(&mut self, at_ms: u64, event: &SessionEvent) -> Result<GateStatus> {
        if at_ms < self.last_event_ms {
            return Err(Error::Ordering {
                last_ms: self.last_event_ms,
                got_ms: at_ms,
            });
        }
        match event {
            SessionEvent::AnswerSubmitted { question_id, .. } => self.check_question(question_id)?,
            SessionEvent::Chat if !self.allowed_at(at_ms)? => {
                return Err(Error::Sequencing("assistant used while the gate is closed".into()))
            }
            _ => {}
        }
        self.last_event_ms = at_ms;
        let now = self.quantize(at_ms);
        self.catch_up(now)?;
        match event {
            SessionEvent::AnswerSubmitted { correct, .. } => {
                let outcome = self.progress.record_answer(*correct, now as f64 / 1000.0);
                if outcome == AnswerOutcome::TaskCompleted {
                    self.task_start_ms = now;
                    self.decided_through_ms = None;
                }
                self.decide_at(now)?;
            }
            SessionEvent::Chat => {
                if self.decided_through_ms.map_or(true, |b| b < now) {
                    self.decide_at(now)?;
                }
                self.progress.record_ai_use();
            }
            SessionEvent::Heartbeat => {
                if self.decided_through_ms.map_or(true, |b| b < now) {
                    self.decide_at(now)?;
                }
            }
        }
        Ok(self.status())
    }
}
