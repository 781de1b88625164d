//! Pedagogical reward shaping.
//!
//! The per-step reward is the sum of five components:
//!
//! | component | effect |
//! |-----------|--------|
//! | success   | `c_succ` when the current task was completed during the elapsed tick |
//! | time      | constant `-c_time` per decision tick |
//! | mt        | `c_mt` for an action that contrasts with the learner's AI-use history |
//! | pf        | granting access before any failure costs `c_pf`; after struggle it pays `α·s_t` or `β·s_t` |
//! | clt       | granting access before `T` seconds costs `δ·(T - s_t)` |
//!
//! Denying access never earns a productive-failure or cognitive-load term.
//! With an empty history both actions earn the metacognitive bonus, since
//! the empty set intersects neither `{true}` nor `{false}`.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::domain::{Action, GateObservation, RewardConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub success: f64,
    pub time: f64,
    pub mt: f64,
    pub pf: f64,
    pub clt: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(success: f64, time: f64, mt: f64, pf: f64, clt: f64) -> Self {
        Self {
            success,
            time,
            mt,
            pf,
            clt,
            total: success + time + mt + pf + clt,
        }
    }

    pub fn components(&self) -> [f64; 5] {
        [self.success, self.time, self.mt, self.pf, self.clt]
    }
}

impl Add for RewardBreakdown {
    type Output = RewardBreakdown;

    fn add(self, rhs: Self) -> Self {
        Self {
            success: self.success + rhs.success,
            time: self.time + rhs.time,
            mt: self.mt + rhs.mt,
            pf: self.pf + rhs.pf,
            clt: self.clt + rhs.clt,
            total: self.total + rhs.total,
        }
    }
}

impl AddAssign for RewardBreakdown {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

pub fn r_success(task_completed_this_tick: bool, cfg: &RewardConfig) -> f64 {
    if task_completed_this_tick {
        cfg.c_succ
    } else {
        0.0
    }
}

pub fn r_time(cfg: &RewardConfig) -> f64 {
    -cfg.c_time
}

pub fn r_mt(history: &[bool], action: Action, cfg: &RewardConfig) -> f64 {
    let contrasts = match action {
        Action::Allow => !history.contains(&true),
        Action::Deny => !history.contains(&false),
    };
    if contrasts {
        cfg.c_mt
    } else {
        0.0
    }
}

pub fn r_pf(failed_attempts: u32, time_on_task: f64, action: Action, cfg: &RewardConfig) -> f64 {
    match action {
        Action::Deny => 0.0,
        Action::Allow => match failed_attempts {
            0 => -cfg.c_pf,
            1..=2 => cfg.alpha * time_on_task,
            _ => cfg.beta * time_on_task,
        },
    }
}

pub fn r_clt(time_on_task: f64, action: Action, cfg: &RewardConfig) -> f64 {
    let threshold = cfg.early_threshold_seconds;
    match action {
        Action::Allow if time_on_task < threshold => -cfg.delta * (threshold - time_on_task),
        _ => 0.0,
    }
}

/// Full shaped reward for taking `action` in `obs`.
pub fn total_reward(
    obs: &GateObservation,
    action: Action,
    task_completed: bool,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    RewardBreakdown::new(
        r_success(task_completed, cfg),
        r_time(cfg),
        r_mt(&obs.ai_used_history, action, cfg),
        r_pf(obs.failed_attempts_question, obs.time_on_task, action, cfg),
        r_clt(obs.time_on_task, action, cfg),
    )
}

/// Reward for a tick simulated after the gate opened: no decision is
/// taken, so only the success and time terms apply.
pub fn passive_reward(task_completed: bool, cfg: &RewardConfig) -> RewardBreakdown {
    RewardBreakdown::new(r_success(task_completed, cfg), r_time(cfg), 0.0, 0.0, 0.0)
}
