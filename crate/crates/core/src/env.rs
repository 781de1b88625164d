//! Tick-driven simulation of one learner working through the curriculum.
//!
//! Time advances in fixed ticks. The agent decides once per tick while the
//! current task's gate is closed. After an `Allow` no further decision
//! exists until the next task, so the environment simulates forward to the
//! task boundary inside the same step and adds the success and time terms
//! of the skipped ticks to that transition's reward.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Action, GateObservation, RewardConfig, TaskSpec, NUM_TASKS};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::progress::{AnswerOutcome, Progress};
use crate::reward::{passive_reward, total_reward, RewardBreakdown};
use crate::student::{answer_latency, StudentConfig, StudentModel};

/// RNG stream for drawing the learner's parameters.
const POPULATION_STREAM: u64 = 0;
/// RNG stream for answer timing and correctness.
const DYNAMICS_STREAM: u64 = 1;
/// RNG stream for stochastic policies.
const POLICY_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvConfig {
    pub reward: RewardConfig,
    pub tasks: TaskSpec,
    pub student: StudentConfig,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let mut v = self.reward.violations("reward.");
        v.extend(self.tasks.violations("tasks."));
        v.extend(self.student.violations("student."));
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn tick(&self) -> f64 {
        self.reward.tick_seconds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendingAttempt {
    pub completes_at: f64,
    pub ai_in_use: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub progress: Progress,
    pub student: StudentModel,
    pub clock: f64,
    pub pending: Option<PendingAttempt>,
    /// Whether each task's gate has been opened.
    pub gates: [bool; NUM_TASKS],
    pub terminal: bool,
    pub cumulative: RewardBreakdown,
    pub ticks: u64,
    pub decisions: u64,
    pub correct_answers: u32,
    pub failed_attempts: u32,
    pub ai_uses: u32,
    #[serde(skip, default = "placeholder_rng")]
    rng: ChaCha8Rng,
}

fn placeholder_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

impl EnvState {
    pub fn observation(&self) -> GateObservation {
        self.progress.observation_at(self.clock)
    }

    /// A decision is pending while the episode runs and the gate is closed.
    pub fn awaiting_decision(&self) -> bool {
        !self.terminal && !self.progress.gate_open()
    }
}

/// One agent decision and its consequences.
///
/// Serialized field names: `before`, `action`, `reward`, `after`,
/// `terminal`, `tick`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub before: GateObservation,
    pub action: Action,
    pub reward: RewardBreakdown,
    pub after: GateObservation,
    pub terminal: bool,
    /// Tick index at which the decision was taken.
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub reward: RewardBreakdown,
    pub final_mastery: [f64; NUM_TASKS],
    pub correct_answers: u32,
    pub failed_attempts: u32,
    pub ai_uses: u32,
    pub duration_seconds: f64,
    pub decisions: u64,
    pub completed: bool,
}

impl EpisodeMetrics {
    pub fn mean_mastery(&self) -> f64 {
        self.final_mastery.iter().sum::<f64>() / NUM_TASKS as f64
    }

    fn from_state(seed: u64, state: &EnvState) -> Self {
        Self {
            seed,
            reward: state.cumulative,
            final_mastery: state.student.mastery,
            correct_answers: state.correct_answers,
            failed_attempts: state.failed_attempts,
            ai_uses: state.ai_uses,
            duration_seconds: state.clock,
            decisions: state.decisions,
            completed: state.progress.finished(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GateEnv {
    cfg: EnvConfig,
}

impl GateEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn reset(&self, seed: u64) -> Result<EnvState> {
        let mut population = ChaCha8Rng::seed_from_u64(seed);
        population.set_stream(POPULATION_STREAM);
        let student = StudentModel::sample(&self.cfg.student, seed, &mut population)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(DYNAMICS_STREAM);
        let mut state = EnvState {
            progress: Progress::new(0.0),
            student,
            clock: 0.0,
            pending: None,
            gates: [false; NUM_TASKS],
            terminal: false,
            cumulative: RewardBreakdown::default(),
            ticks: 0,
            decisions: 0,
            correct_answers: 0,
            failed_attempts: 0,
            ai_uses: 0,
            rng,
        };
        self.start_attempt(&mut state)?;
        Ok(state)
    }

    pub fn step(&self, state: &mut EnvState, action: Action) -> Result<Transition> {
        if state.terminal {
            return Err(Error::Usage("step on a terminal state".into()));
        }
        if state.progress.gate_open() {
            return Err(Error::Usage(
                "the gate is already open for this task; no decision is pending".into(),
            ));
        }
        let before = state.observation();
        let tick = state.ticks;
        if action == Action::Allow {
            state.progress.open_gate();
            state.gates[state.progress.task()] = true;
        }
        let completed = self.advance_tick(state)?;
        let mut reward = total_reward(&before, action, completed, &self.cfg.reward);
        while !state.terminal && state.progress.gate_open() {
            let completed = self.advance_tick(state)?;
            reward += passive_reward(completed, &self.cfg.reward);
        }
        state.cumulative += reward;
        state.decisions += 1;
        Ok(Transition {
            before,
            action,
            reward,
            after: state.observation(),
            terminal: state.terminal,
            tick,
        })
    }

    /// Advances one tick. Returns whether a task was completed in it.
    fn advance_tick(&self, state: &mut EnvState) -> Result<bool> {
        state.clock += self.cfg.tick();
        state.ticks += 1;
        let mut task_completed = false;
        if let Some(pending) = state.pending {
            if pending.completes_at <= state.clock + 1e-9 {
                state.pending = None;
                task_completed = self.finish_attempt(state, pending)?;
            }
        }
        if !state.terminal && state.clock >= self.cfg.tasks.episode_time_cap_seconds - 1e-9 {
            state.terminal = true;
        }
        Ok(task_completed)
    }

    fn finish_attempt(&self, state: &mut EnvState, attempt: PendingAttempt) -> Result<bool> {
        let item = TaskSpec::item_index(state.progress.task(), state.progress.question());
        let retakes = state.progress.failed_attempts_question();
        let p = state
            .student
            .attempt_correct_prob(item, retakes, attempt.ai_in_use)?;
        let correct = state.rng.random::<f64>() < p;
        state.student.observe(item, retakes, correct, attempt.ai_in_use)?;
        if correct {
            state.correct_answers += 1;
        } else {
            state.failed_attempts += 1;
        }
        let outcome = state.progress.record_answer(correct, state.clock);
        match outcome {
            AnswerOutcome::CurriculumCompleted => {
                state.terminal = true;
                return Ok(true);
            }
            AnswerOutcome::TaskCompleted => state.student.begin_task(state.progress.task()),
            _ => {}
        }
        self.start_attempt(state)?;
        Ok(outcome.completes_task())
    }

    fn start_attempt(&self, state: &mut EnvState) -> Result<()> {
        let ai_in_use = state.progress.gate_open()
            && state.rng.random::<f64>() < state.student.ai.p_use_when_available;
        if ai_in_use {
            state.progress.record_ai_use();
            state.ai_uses += 1;
        }
        let latency = answer_latency(
            &state.student.latency,
            &state.student.ai,
            ai_in_use,
            self.cfg.tick(),
            &mut state.rng,
        )?;
        state.pending = Some(PendingAttempt {
            completes_at: state.clock + latency,
            ai_in_use,
        });
        Ok(())
    }

    /// Runs one full episode under `policy`, optionally collecting transitions.
    pub fn run_episode(
        &self,
        policy: &Policy,
        seed: u64,
        mut sink: Option<&mut Vec<Transition>>,
    ) -> Result<EpisodeMetrics> {
        let mut state = self.reset(seed)?;
        let mut policy_rng = ChaCha8Rng::seed_from_u64(seed);
        policy_rng.set_stream(POLICY_STREAM);
        while !state.terminal {
            let action = policy.decide(&state.observation(), &mut policy_rng)?;
            let t = self.step(&mut state, action)?;
            if let Some(sink) = sink.as_deref_mut() {
                sink.push(t);
            }
        }
        Ok(EpisodeMetrics::from_state(seed, &state))
    }
}

/// Runs `n_episodes` episodes; episode `i` uses seed `seed + i`.
pub fn run_fixed_policy(
    cfg: &EnvConfig,
    policy: &Policy,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeMetrics>> {
    if n_episodes == 0 {
        return Err(Error::validation("episodes", "n_episodes ≥ 1"));
    }
    let env = GateEnv::new(cfg.clone())?;
    (0..n_episodes as u64)
        .map(|i| env.run_episode(policy, seed.wrapping_add(i), None))
        .collect()
}

/// Writes transitions as JSON lines, gzip-compressed if the path ends in `.gz`.
pub struct TransitionWriter {
    inner: Box<dyn Write>,
}

impl TransitionWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let inner: Box<dyn Write> = if is_gzip(path) {
            Box::new(GzEncoder::new(BufWriter::new(file), Compression::default()))
        } else {
            Box::new(BufWriter::new(file))
        };
        Ok(Self { inner })
    }

    pub fn write(&mut self, t: &Transition) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.inner, t)?;
        self.inner.write_all(b"\n")
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

pub fn read_transitions(path: &Path) -> Result<Vec<Transition>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader: Box<dyn BufRead> = if is_gzip(path) {
        Box::new(BufReader::new(GzDecoder::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    reader
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|line| {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| Error::Format {
                what: "transition log".into(),
                detail: e.to_string(),
            })
        })
        .collect()
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}
