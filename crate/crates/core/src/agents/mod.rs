//! Learning agents (PPO, DQN, A2C) trained against [`GateEnv`].

mod a2c;
mod dqn;
mod gae;
mod ppo;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approx::{Approximator, Checkpoint};
use crate::domain::{featurize, Action, FeatureCaps, FEATURE_DIM};
use crate::env::{EnvConfig, EnvState, GateEnv};
use crate::error::{Error, Result, Violation};
use crate::policy::{softmax2, NetworkPolicy, Policy};
use crate::reward::RewardBreakdown;

pub use a2c::{a2c_loss, a2c_sample_grad, A2cConfig};
pub use dqn::{dqn_loss, dqn_targets, DqnConfig, ReplayBuffer, StoredTransition};
pub use gae::gae_advantages;
pub use ppo::{ppo_loss, ppo_sample_grad, PpoConfig, PpoLoss, RolloutBuffer};

/// Base of the episode seeds used for periodic evaluation during training.
pub const EVAL_SEED_BASE: u64 = 0x00E1_0000_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Ppo,
    Dqn,
    A2c,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Ppo, AgentKind::Dqn, AgentKind::A2c];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Ppo => "ppo",
            AgentKind::Dqn => "dqn",
            AgentKind::A2c => "a2c",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppo" => Ok(AgentKind::Ppo),
            "dqn" => Ok(AgentKind::Dqn),
            "a2c" => Ok(AgentKind::A2c),
            _ => Err(Error::validation("agent", format!("unknown agent {s:?}"))),
        }
    }
}

/// Everything under the `training` key of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Environment decisions per training run.
    pub total_steps: u64,
    pub hidden: Vec<usize>,
    pub features: FeatureCaps,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub ppo: PpoConfig,
    pub dqn: DqnConfig,
    pub a2c: A2cConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            total_steps: 300_000,
            hidden: vec![32, 32],
            features: FeatureCaps::default(),
            eval_interval: 50_000,
            eval_episodes: 100,
            ppo: PpoConfig::default(),
            dqn: DqnConfig::default(),
            a2c: A2cConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut out = self.features.violations(&format!("{prefix}features."));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            out.push(Violation::new(format!("{prefix}hidden"), "hidden layer sizes > 0"));
        }
        if self.eval_interval == 0 {
            out.push(Violation::new(format!("{prefix}eval_interval"), "eval_interval > 0"));
        }
        if self.eval_episodes == 0 {
            out.push(Violation::new(format!("{prefix}eval_episodes"), "eval_episodes > 0"));
        }
        out.extend(self.ppo.violations(&format!("{prefix}ppo.")));
        out.extend(self.dqn.violations(&format!("{prefix}dqn.")));
        out.extend(self.a2c.violations(&format!("{prefix}a2c.")));
        out
    }

    pub fn dims(&self, outputs: usize) -> Vec<usize> {
        let mut dims = vec![FEATURE_DIM];
        dims.extend(&self.hidden);
        dims.push(outputs);
        dims
    }
}

pub(crate) fn check_gamma(prefix: &str, gamma: f64, out: &mut Vec<Violation>) {
    if !(gamma > 0.0 && gamma <= 1.0) {
        out.push(Violation::new(format!("{prefix}gamma"), "0 < γ ≤ 1"));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

/// `[log π(Deny), log π(Allow)]` from policy logits.
pub fn log_softmax2(logits: &[f64]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    [logits[0] - lse, logits[1] - lse]
}

pub fn entropy2(logits: &[f64]) -> f64 {
    let p = softmax2(logits[0], logits[1]);
    let lp = log_softmax2(logits);
    -(p[0] * lp[0] + p[1] * lp[1])
}

/// Chooses an action from policy logits; returns it with its log-probability.
pub fn act<R: Rng + ?Sized>(logits: &[f64], mode: ActMode, rng: &mut R) -> (Action, f64) {
    let lp = log_softmax2(logits);
    let action = match mode {
        ActMode::Greedy => crate::policy::greedy_action(logits),
        ActMode::Sample => {
            if rng.random::<f64>() < lp[1].exp() {
                Action::Allow
            } else {
                Action::Deny
            }
        }
    };
    (action, lp[action.index()])
}

/// Gradient of `log π(action)` with respect to the two logits.
pub(crate) fn d_log_prob(logits: &[f64], action: Action) -> [f64; 2] {
    let p = softmax2(logits[0], logits[1]);
    let mut g = [-p[0], -p[1]];
    g[action.index()] += 1.0;
    g
}

/// Gradient of the entropy with respect to the two logits.
pub(crate) fn d_entropy(logits: &[f64]) -> [f64; 2] {
    let p = softmax2(logits[0], logits[1]);
    let lp = log_softmax2(logits);
    let h = -(p[0] * lp[0] + p[1] * lp[1]);
    [-p[0] * (lp[0] + h), -p[1] * (lp[1] + h)]
}

/// Mean evaluation outcome over a batch of greedy episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean_return: f64,
    pub components: RewardBreakdown,
}

pub fn evaluate_policy(env: &GateEnv, policy: &Policy, episodes: usize, seed_base: u64) -> Result<EvalSummary> {
    let mut sum = RewardBreakdown::default();
    for i in 0..episodes as u64 {
        sum += env.run_episode(policy, seed_base.wrapping_add(i), None)?.reward;
    }
    let n = episodes.max(1) as f64;
    let components = RewardBreakdown {
        success: sum.success / n,
        time: sum.time / n,
        mt: sum.mt / n,
        pf: sum.pf / n,
        clt: sum.clt / n,
        total: sum.total / n,
    };
    Ok(EvalSummary {
        mean_return: components.total,
        components,
    })
}

/// One row of the training-curve CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub mean_return: f64,
    pub success: f64,
    pub time: f64,
    pub mt: f64,
    pub pf: f64,
    pub clt: f64,
    pub clip_fraction: Option<f64>,
    pub kl: Option<f64>,
    pub epsilon: Option<f64>,
}

impl CurvePoint {
    fn new(step: u64, eval: &EvalSummary) -> Self {
        let c = eval.components;
        Self {
            step,
            mean_return: eval.mean_return,
            success: c.success,
            time: c.time,
            mt: c.mt,
            pf: c.pf,
            clt: c.clt,
            clip_fraction: None,
            kl: None,
            epsilon: None,
        }
    }
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in curve {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        what: format!("csv {}", path.display()),
        detail: e.to_string(),
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub kind: AgentKind,
    pub checkpoint: Checkpoint,
    pub curve: Vec<CurvePoint>,
}

impl TrainOutcome {
    pub fn policy(&self, caps: FeatureCaps) -> Result<Policy> {
        Ok(Policy::Network(NetworkPolicy::new(self.checkpoint.net.clone(), caps)?))
    }
}

/// Cycles through training episodes, each with a fresh learner.
pub(crate) struct EpisodeRunner {
    env: GateEnv,
    caps: FeatureCaps,
    seed: u64,
    episode: u64,
    pub state: EnvState,
}

impl EpisodeRunner {
    pub(crate) fn new(env: GateEnv, caps: FeatureCaps, seed: u64, stream: u64) -> Result<Self> {
        let seed = (seed << 24) ^ (stream << 20);
        let state = env.reset(seed)?;
        Ok(Self {
            env,
            caps,
            seed,
            episode: 0,
            state,
        })
    }

    pub(crate) fn features(&self) -> Result<[f64; FEATURE_DIM]> {
        featurize(&self.state.observation(), &self.caps)
    }

    /// Applies `action`; resets into a new episode when this one ends.
    /// Returns the reward and whether the episode terminated.
    pub(crate) fn step(&mut self, action: Action) -> Result<(f64, bool)> {
        let t = self.env.step(&mut self.state, action)?;
        if t.terminal {
            self.episode += 1;
            self.state = self.env.reset(self.seed.wrapping_add(self.episode))?;
        }
        Ok((t.reward.total, t.terminal))
    }
}

pub(crate) struct Evaluator {
    env: GateEnv,
    caps: FeatureCaps,
    episodes: usize,
    interval: u64,
    next: u64,
}

impl Evaluator {
    fn new(env: GateEnv, cfg: &TrainingConfig) -> Self {
        Self {
            env,
            caps: cfg.features,
            episodes: cfg.eval_episodes,
            interval: cfg.eval_interval,
            next: 0,
        }
    }

    fn due(&self, step: u64) -> bool {
        step >= self.next
    }

    fn run(&mut self, step: u64, net: &Approximator) -> Result<CurvePoint> {
        self.next = (step / self.interval + 1) * self.interval;
        let policy = Policy::Network(NetworkPolicy::new(net.clone(), self.caps)?);
        let eval = evaluate_policy(&self.env, &policy, self.episodes, EVAL_SEED_BASE)?;
        tracing::debug!(step, mean_return = eval.mean_return, "evaluation");
        Ok(CurvePoint::new(step, &eval))
    }
}

/// Tracks consecutive numerically failed updates.
pub(crate) struct NumericGuard {
    agent: AgentKind,
    failures: u32,
}

impl NumericGuard {
    fn new(agent: AgentKind) -> Self {
        Self { agent, failures: 0 }
    }

    /// Passes successful updates through; aborts after three consecutive failures.
    fn check<T>(&mut self, step: u64, result: Result<T>) -> Result<Option<T>> {
        match result {
            Ok(v) => {
                self.failures = 0;
                Ok(Some(v))
            }
            Err(Error::Numeric { index, detail }) => {
                self.failures += 1;
                tracing::warn!(agent = %self.agent, step, index, %detail, "non-finite loss");
                if self.failures >= 3 {
                    Err(Error::TrainingAborted {
                        agent: self.agent.to_string(),
                        step,
                        detail: format!("three consecutive non-finite losses (last: sample {index}, {detail})"),
                    })
                } else {
                    Ok(None)
                }
            }
            Err(e) => Err(e),
        }
    }
}

/// Trains one agent to the configured step budget.
pub fn train(kind: AgentKind, env_cfg: &EnvConfig, cfg: &TrainingConfig, seed: u64) -> Result<TrainOutcome> {
    let v = cfg.violations("training.");
    if !v.is_empty() {
        return Err(Error::Validation(v));
    }
    let env = GateEnv::new(env_cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (checkpoint, curve) = match kind {
        AgentKind::Ppo => ppo::train(env, cfg, seed, &mut rng)?,
        AgentKind::Dqn => dqn::train(env, cfg, seed, &mut rng)?,
        AgentKind::A2c => a2c::train(env, cfg, seed, &mut rng)?,
    };
    Ok(TrainOutcome {
        kind,
        checkpoint,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (a, lp) = act(&[0.0, 0.0], ActMode::Greedy, &mut rng);
        assert_eq!(a, Action::Deny);
        assert!((lp - 0.5f64.ln()).abs() < 1e-12);
        let n = 100_000;
        let allows = (0..n)
            .filter(|_| act(&[0.0, 0.0], ActMode::Sample, &mut rng).0 == Action::Allow)
            .count();
        assert!((allows as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn skewed_logits() {
        let p_deny = 2f64.exp() / (2f64.exp() + 1.0);
        assert!((p_deny - 0.8808).abs() < 1e-4);
        assert!((log_softmax2(&[2.0, 0.0])[0].exp() - p_deny).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let denies = (0..n)
            .filter(|_| act(&[2.0, 0.0], ActMode::Sample, &mut rng).0 == Action::Deny)
            .count();
        assert!((denies as f64 / n as f64 - p_deny).abs() < 0.01);
    }

    #[test]
    fn uniform_entropy_is_ln2() {
        assert!((entropy2(&[0.3, 0.3]) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logit_derivatives_match_finite_differences() {
        let logits = [0.7, -0.4];
        let h = 1e-6;
        for k in 0..2 {
            let mut up = logits;
            let mut dn = logits;
            up[k] += h;
            dn[k] -= h;
            let fd_lp = (log_softmax2(&up)[1] - log_softmax2(&dn)[1]) / (2.0 * h);
            assert!((fd_lp - d_log_prob(&logits, Action::Allow)[k]).abs() < 1e-8);
            let fd_h = (entropy2(&up) - entropy2(&dn)) / (2.0 * h);
            assert!((fd_h - d_entropy(&logits)[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn agent_names_round_trip() {
        for k in AgentKind::ALL {
            assert_eq!(k.name().parse::<AgentKind>().unwrap(), k);
        }
    }
}
