//! Deep Q-learning with uniform experience replay and a periodically synced
//! target network (`[q_deny, q_allow]`).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_gamma, AgentKind, CurvePoint, EpisodeRunner, Evaluator, NumericGuard, TrainingConfig};
use crate::approx::{gradients, Adam, AdamConfig, Approximator, Checkpoint, RngState};
use crate::domain::{Action, FEATURE_DIM};
use crate::env::GateEnv;
use crate::error::{Error, Result, Violation};
use crate::policy::{greedy_action, Heads};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Environment steps collected before the first update.
    pub learning_starts: u64,
    /// Environment steps between updates.
    pub train_every: u64,
    /// Updates between target-network syncs.
    pub target_sync_updates: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the step budget over which ε anneals linearly.
    pub epsilon_fraction: f64,
    pub optimizer: AdamConfig,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            replay_capacity: 50_000,
            batch_size: 64,
            learning_starts: 1_000,
            train_every: 4,
            target_sync_updates: 1_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_fraction: 0.2,
            optimizer: AdamConfig::default(),
        }
    }
}

impl DqnConfig {
    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        check_gamma(prefix, self.gamma, &mut out);
        if self.replay_capacity == 0 || self.batch_size == 0 || self.batch_size > self.replay_capacity {
            out.push(Violation::new(
                format!("{prefix}batch_size"),
                "0 < batch_size ≤ replay_capacity",
            ));
        }
        if self.train_every == 0 || self.target_sync_updates == 0 {
            out.push(Violation::new(
                format!("{prefix}train_every"),
                "train_every and target_sync_updates > 0",
            ));
        }
        for (name, v) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
            ("epsilon_fraction", self.epsilon_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                out.push(Violation::new(format!("{prefix}{name}"), "must lie in [0,1]"));
            }
        }
        out
    }

    /// Exploration rate after `step` of `total` environment steps.
    pub fn epsilon(&self, step: u64, total: u64) -> f64 {
        let horizon = self.epsilon_fraction * total as f64;
        if horizon <= 0.0 {
            return self.epsilon_end;
        }
        let frac = (step as f64 / horizon).min(1.0);
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTransition {
    pub features: [f64; FEATURE_DIM],
    pub action: Action,
    pub reward: f64,
    pub next_features: [f64; FEATURE_DIM],
    pub terminal: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<StoredTransition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Inserts, overwriting the oldest entry once full.
    pub fn push(&mut self, t: StoredTransition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Samples `n` entries uniformly with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Result<Vec<&'a StoredTransition>> {
        if self.items.is_empty() {
            return Err(Error::Usage("sampling from an empty replay buffer".into()));
        }
        Ok((0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoredTransition> {
        self.items.iter()
    }
}

/// `r + γ·max_a' Q_target(s', a')`, or `r` for terminal transitions.
pub fn dqn_targets(rewards: &[f64], next_max_q: &[f64], terminals: &[bool], gamma: f64) -> Vec<f64> {
    rewards
        .iter()
        .zip(next_max_q)
        .zip(terminals)
        .map(|((r, q), &done)| if done { *r } else { r + gamma * q })
        .collect()
}

/// Mean squared temporal-difference error.
pub fn dqn_loss(predicted: &[f64], targets: &[f64]) -> Result<f64> {
    if predicted.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: predicted.len(),
            actual: targets.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::Usage("empty DQN batch".into()));
    }
    Ok(predicted.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / predicted.len() as f64)
}

pub(super) fn train(
    env: GateEnv,
    cfg: &TrainingConfig,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(Checkpoint, Vec<CurvePoint>)> {
    let dqn = &cfg.dqn;
    let mut net = Approximator::new(&cfg.dims(Heads::QValues.outputs()), rng);
    let mut target = net.clone();
    let mut opt = Adam::new(dqn.optimizer, &net);
    let mut runner = EpisodeRunner::new(env.clone(), cfg.features, seed, 0)?;
    let mut evaluator = Evaluator::new(env, cfg);
    let mut guard = NumericGuard::new(AgentKind::Dqn);
    let mut replay = ReplayBuffer::new(dqn.replay_capacity);
    let mut curve = Vec::new();
    let mut updates = 0u64;
    let mut step = 0u64;

    let mut x = runner.features()?;
    loop {
        if evaluator.due(step) || step >= cfg.total_steps {
            let mut point = evaluator.run(step, &net)?;
            point.epsilon = Some(dqn.epsilon(step, cfg.total_steps));
            if curve.last().map(|p: &CurvePoint| p.step) != Some(step) {
                curve.push(point);
            }
        }
        if step >= cfg.total_steps {
            break;
        }

        let eps = dqn.epsilon(step, cfg.total_steps);
        let action = if rng.random::<f64>() < eps {
            Action::from_index(rng.random_range(0..2))
        } else {
            greedy_action(&net.forward(&x)?)
        };
        let (reward, terminal) = runner.step(action)?;
        let next = runner.features()?;
        replay.push(StoredTransition {
            features: x,
            action,
            reward,
            // After a terminal step the runner has already reset; the next
            // features are unused because the target ignores them.
            next_features: next,
            terminal,
        });
        x = next;
        step += 1;

        if step >= dqn.learning_starts && step % dqn.train_every == 0 {
            let batch = replay.sample(dqn.batch_size, rng)?;
            let mut next_max = Vec::with_capacity(batch.len());
            for t in &batch {
                let q = target.forward(&t.next_features)?;
                next_max.push(q[0].max(q[1]));
            }
            let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
            let terminals: Vec<bool> = batch.iter().map(|t| t.terminal).collect();
            let targets = dqn_targets(&rewards, &next_max, &terminals, dqn.gamma);
            let inputs: Vec<Vec<f64>> = batch.iter().map(|t| t.features.to_vec()).collect();
            let result = gradients(&net, &inputs, |i, out| {
                let a = batch[i].action.index();
                let err = out[a] - targets[i];
                let mut d = vec![0.0; 2];
                d[a] = 2.0 * err;
                (err * err, d)
            });
            if let Some((_, grads)) = guard.check(step, result)? {
                opt.step(&mut net, grads);
                updates += 1;
                if updates % dqn.target_sync_updates == 0 {
                    target = net.clone();
                }
            }
        }
    }

    let checkpoint = Checkpoint {
        net,
        optimizer: Some(opt),
        step,
        config_hash: String::new(),
        rng: Some(RngState::capture(rng)),
    };
    Ok((checkpoint, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn terminal_target_is_reward() {
        let t = dqn_targets(&[1.0, 1.0], &[5.0, 5.0], &[true, false], 0.9);
        assert_eq!(t, vec![1.0, 5.5]);
    }

    #[test]
    fn loss_is_mean_squared_error() {
        assert!((dqn_loss(&[1.0, 3.0], &[0.0, 1.0]).unwrap() - 2.5).abs() < 1e-12);
        assert!(dqn_loss(&[1.0], &[]).is_err());
    }

    #[test]
    fn replay_ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(StoredTransition {
                features: [0.0; FEATURE_DIM],
                action: Action::Deny,
                reward: i as f64,
                next_features: [0.0; FEATURE_DIM],
                terminal: false,
            });
        }
        let mut rewards: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(buf.sample(10, &mut rng).unwrap().len(), 10);
        assert!(ReplayBuffer::new(2).sample(1, &mut rng).is_err());
    }

    #[test]
    fn epsilon_anneals_linearly_then_holds() {
        let cfg = DqnConfig::default();
        assert_eq!(cfg.epsilon(0, 1000), 1.0);
        assert!((cfg.epsilon(100, 1000) - 0.525).abs() < 1e-12);
        assert!((cfg.epsilon(200, 1000) - 0.05).abs() < 1e-12);
        assert!((cfg.epsilon(900, 1000) - 0.05).abs() < 1e-12);
    }
}
