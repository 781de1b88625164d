//! Shared vocabulary: what the gate agent observes, what it can do, and
//! the fixed curriculum it operates on.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

pub const NUM_TASKS: usize = 3;
pub const QUESTIONS_PER_TASK: usize = 3;
pub const NUM_ITEMS: usize = NUM_TASKS * QUESTIONS_PER_TASK;

/// Length of the vector produced by [`featurize`].
pub const FEATURE_DIM: usize = 10;

/// Everything the gating agent sees at a decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateObservation {
    /// Failed attempts on the question currently being worked on.
    pub failed_attempts_question: u32,
    /// Seconds spent on the current task.
    pub time_on_task: f64,
    /// One entry per completed task: whether the learner used AI during it.
    pub ai_used_history: Vec<bool>,
    /// Failed attempts summed over all questions of the current task.
    pub failed_attempts_task: u32,
    pub task_index: usize,
    pub question_index: usize,
    pub ai_currently_granted: bool,
}

impl GateObservation {
    /// Observation at the very start of an episode.
    pub fn initial() -> Self {
        Self {
            failed_attempts_question: 0,
            time_on_task: 0.0,
            ai_used_history: Vec::new(),
            failed_attempts_task: 0,
            task_index: 0,
            question_index: 0,
            ai_currently_granted: false,
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.task_index >= NUM_TASKS {
            out.push(Violation::new("task_index", "task_index ∈ {0,1,2}"));
        }
        if self.question_index >= QUESTIONS_PER_TASK {
            out.push(Violation::new("question_index", "question_index ∈ {0,1,2}"));
        }
        if self.ai_used_history.len() != self.task_index {
            out.push(Violation::new(
                "ai_used_history",
                "length(ai_used_history) == task_index",
            ));
        }
        if self.failed_attempts_question > self.failed_attempts_task {
            out.push(Violation::new(
                "failed_attempts_question",
                "failed_attempts_current_question ≤ failed_attempts_current_task",
            ));
        }
        if !(self.time_on_task.is_finite() && self.time_on_task >= 0.0) {
            out.push(Violation::new("time_on_task", "time_on_task ≥ 0"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

/// The binary gate action. `Deny < Allow`, so ties resolve to `Deny`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Deny,
    Allow,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Deny, Action::Allow];

    /// Output-head index: 0 for `Deny`, 1 for `Allow`.
    pub fn index(self) -> usize {
        match self {
            Action::Deny => 0,
            Action::Allow => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::Deny
        } else {
            Action::Allow
        }
    }
}

/// Shaping constants of the reward function plus the decision-epoch length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub c_succ: f64,
    pub c_time: f64,
    pub c_mt: f64,
    pub c_pf: f64,
    /// Per-second productive-failure slope after one or two failures.
    pub alpha: f64,
    /// Per-second productive-failure slope after more than two failures.
    pub beta: f64,
    /// Per-second penalty for granting access before the early threshold.
    pub delta: f64,
    pub early_threshold_seconds: f64,
    pub tick_seconds: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            c_succ: 10.0,
            c_time: 0.05,
            c_mt: 0.5,
            c_pf: 2.0,
            alpha: 0.02,
            beta: 0.05,
            delta: 0.02,
            early_threshold_seconds: 60.0,
            tick_seconds: 5.0,
        }
    }
}

impl RewardConfig {
    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        let fields = [
            ("c_succ", self.c_succ),
            ("c_time", self.c_time),
            ("c_mt", self.c_mt),
            ("c_pf", self.c_pf),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
            ("early_threshold_seconds", self.early_threshold_seconds),
            ("tick_seconds", self.tick_seconds),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value >= 0.0) {
                out.push(Violation::new(format!("{prefix}{name}"), format!("{name} ≥ 0")));
            }
        }
        if self.beta < self.alpha {
            out.push(Violation::new(format!("{prefix}beta"), "beta ≥ alpha"));
        }
        if self.early_threshold_seconds <= 0.0 {
            out.push(Violation::new(
                format!("{prefix}early_threshold_seconds"),
                "early_threshold_seconds > 0",
            ));
        }
        if self.tick_seconds <= 0.0 {
            out.push(Violation::new(format!("{prefix}tick_seconds"), "tick_seconds > 0"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDef {
    pub task_id: String,
    /// One item id per question, in unlock order.
    pub item_ids: Vec<String>,
}

/// The curriculum: three tasks of three strictly ordered questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub tasks: Vec<TaskDef>,
    pub episode_time_cap_seconds: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        let tasks = (1..=NUM_TASKS)
            .map(|t| TaskDef {
                task_id: format!("task-{t}"),
                item_ids: (1..=QUESTIONS_PER_TASK).map(|q| format!("t{t}q{q}")).collect(),
            })
            .collect();
        Self {
            tasks,
            episode_time_cap_seconds: 1200.0,
        }
    }
}

impl TaskSpec {
    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.tasks.len() != NUM_TASKS {
            out.push(Violation::new(format!("{prefix}tasks"), "exactly 3 tasks"));
        }
        let mut seen = HashSet::new();
        for (i, task) in self.tasks.iter().enumerate() {
            if task.item_ids.len() != QUESTIONS_PER_TASK {
                out.push(Violation::new(
                    format!("{prefix}tasks[{i}].item_ids"),
                    "exactly 3 questions per task",
                ));
            }
            for id in &task.item_ids {
                if !seen.insert(id.as_str()) {
                    out.push(Violation::new(
                        format!("{prefix}tasks[{i}].item_ids"),
                        format!("item ids must be distinct (duplicate {id:?})"),
                    ));
                }
            }
        }
        if !(self.episode_time_cap_seconds.is_finite() && self.episode_time_cap_seconds > 0.0) {
            out.push(Violation::new(
                format!("{prefix}episode_time_cap_seconds"),
                "episode_time_cap_seconds > 0",
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations("tasks.");
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn item_id(&self, task: usize, question: usize) -> Option<&str> {
        self.tasks
            .get(task)
            .and_then(|t| t.item_ids.get(question))
            .map(String::as_str)
    }

    /// Global item index (0..9) for a question.
    pub fn item_index(task: usize, question: usize) -> usize {
        task * QUESTIONS_PER_TASK + question
    }
}

/// Saturation caps used when encoding observations for the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureCaps {
    pub failed_attempts_question: u32,
    pub time_on_task_seconds: f64,
    pub failed_attempts_task: u32,
}

impl Default for FeatureCaps {
    fn default() -> Self {
        Self {
            failed_attempts_question: 5,
            time_on_task_seconds: 300.0,
            failed_attempts_task: 10,
        }
    }
}

impl FeatureCaps {
    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.failed_attempts_question == 0 {
            out.push(Violation::new(
                format!("{prefix}failed_attempts_question"),
                "cap > 0",
            ));
        }
        if self.failed_attempts_task == 0 {
            out.push(Violation::new(format!("{prefix}failed_attempts_task"), "cap > 0"));
        }
        if !(self.time_on_task_seconds.is_finite() && self.time_on_task_seconds > 0.0) {
            out.push(Violation::new(
                format!("{prefix}time_on_task_seconds"),
                "cap > 0",
            ));
        }
        out
    }
}

/// Encodes an observation as a fixed-length network input.
///
/// Layout: `[s_fa, s_t, s_cu]` scaled by their caps and saturated at 1,
/// a one-hot task index, three history slots (`+1` used, `-1` not used,
/// `0` not yet played) and the current gate flag.
pub fn featurize(obs: &GateObservation, caps: &FeatureCaps) -> Result<[f64; FEATURE_DIM]> {
    obs.validate()?;
    let mut x = [0.0; FEATURE_DIM];
    let cap_fa = caps.failed_attempts_question as f64;
    let cap_cu = caps.failed_attempts_task as f64;
    x[0] = (obs.failed_attempts_question as f64).min(cap_fa) / cap_fa;
    x[1] = obs.time_on_task.min(caps.time_on_task_seconds) / caps.time_on_task_seconds;
    x[2] = (obs.failed_attempts_task as f64).min(cap_cu) / cap_cu;
    x[3 + obs.task_index] = 1.0;
    for (slot, used) in obs.ai_used_history.iter().enumerate() {
        x[6 + slot] = if *used { 1.0 } else { -1.0 };
    }
    x[9] = if obs.ai_currently_granted { 1.0 } else { 0.0 };
    Ok(x)
}
