//! Curriculum progress and gate bookkeeping shared by the simulator and the
//! live service, so both derive observations the same way.

use serde::{Deserialize, Serialize};

use crate::domain::{GateObservation, NUM_TASKS, QUESTIONS_PER_TASK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerOutcome {
    Incorrect,
    NextQuestion,
    TaskCompleted,
    CurriculumCompleted,
}

impl AnswerOutcome {
    pub fn completes_task(self) -> bool {
        matches!(self, AnswerOutcome::TaskCompleted | AnswerOutcome::CurriculumCompleted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    task: usize,
    question: usize,
    failed_question: u32,
    failed_task: u32,
    task_started_at: f64,
    history: Vec<bool>,
    gate_open: bool,
    ai_used_in_task: bool,
    finished: bool,
}

impl Progress {
    pub fn new(start_time: f64) -> Self {
        Self {
            task: 0,
            question: 0,
            failed_question: 0,
            failed_task: 0,
            task_started_at: start_time,
            history: Vec::new(),
            gate_open: false,
            ai_used_in_task: false,
            finished: false,
        }
    }

    pub fn task(&self) -> usize {
        self.task
    }

    pub fn question(&self) -> usize {
        self.question
    }

    pub fn failed_attempts_question(&self) -> u32 {
        self.failed_question
    }

    pub fn failed_attempts_task(&self) -> u32 {
        self.failed_task
    }

    pub fn task_started_at(&self) -> f64 {
        self.task_started_at
    }

    /// AI use per completed task.
    pub fn history(&self) -> &[bool] {
        &self.history
    }

    pub fn gate_open(&self) -> bool {
        self.gate_open
    }

    pub fn ai_used_in_task(&self) -> bool {
        self.ai_used_in_task
    }

    pub fn finished(&self) -> bool {
        self.finished
    }

    pub fn time_on_task(&self, now: f64) -> f64 {
        (now - self.task_started_at).max(0.0)
    }

    /// Observation with `time_on_task` measured at `now`.
    pub fn observation_at(&self, now: f64) -> GateObservation {
        self.observation_with_time(self.time_on_task(now))
    }

    pub fn observation_with_time(&self, time_on_task: f64) -> GateObservation {
        GateObservation {
            failed_attempts_question: self.failed_question,
            time_on_task,
            ai_used_history: self.history[..self.task.min(self.history.len())].to_vec(),
            failed_attempts_task: self.failed_task,
            task_index: self.task,
            question_index: self.question,
            ai_currently_granted: self.gate_open,
        }
    }

    /// Opens the gate for the current task; it stays open until the task ends.
    pub fn open_gate(&mut self) {
        self.gate_open = true;
    }

    /// Records that the learner actually used the assistant. Only counts
    /// while the gate is open.
    pub fn record_ai_use(&mut self) -> bool {
        if self.gate_open && !self.finished {
            self.ai_used_in_task = true;
            true
        } else {
            false
        }
    }

    /// Applies an answer to the current question at time `now`.
    pub fn record_answer(&mut self, correct: bool, now: f64) -> AnswerOutcome {
        debug_assert!(!self.finished, "answer after curriculum completion");
        if !correct {
            self.failed_question += 1;
            self.failed_task += 1;
            return AnswerOutcome::Incorrect;
        }
        self.failed_question = 0;
        if self.question + 1 < QUESTIONS_PER_TASK {
            self.question += 1;
            return AnswerOutcome::NextQuestion;
        }
        self.history.push(self.gate_open && self.ai_used_in_task);
        if self.task + 1 >= NUM_TASKS {
            self.finished = true;
            return AnswerOutcome::CurriculumCompleted;
        }
        self.task += 1;
        self.question = 0;
        self.failed_task = 0;
        self.task_started_at = now;
        self.gate_open = false;
        self.ai_used_in_task = false;
        AnswerOutcome::TaskCompleted
    }
}
