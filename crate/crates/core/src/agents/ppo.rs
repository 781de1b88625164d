//! Proximal policy optimization with a clipped surrogate objective and a
//! shared actor-critic network (`[logit_deny, logit_allow, value]`).

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    act, check_gamma, d_entropy, d_log_prob, entropy2, gae_advantages, log_softmax2, ActMode,
    AgentKind, CurvePoint, EpisodeRunner, Evaluator, NumericGuard, TrainingConfig,
};
use crate::approx::{gradients, Adam, AdamConfig, Approximator, Checkpoint, RngState};
use crate::domain::{Action, FEATURE_DIM};
use crate::env::GateEnv;
use crate::error::{Error, Result, Violation};
use crate::policy::Heads;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub rollout_length: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub normalize_advantages: bool,
    pub optimizer: AdamConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            epochs: 10,
            minibatch_size: 64,
            rollout_length: 2048,
            value_coef: 0.5,
            entropy_coef: 0.03,
            normalize_advantages: true,
            optimizer: AdamConfig {
                learning_rate: 1e-3,
                ..AdamConfig::default()
            },
        }
    }
}

impl PpoConfig {
    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            out.push(Violation::new(format!("{prefix}clip_epsilon"), "0 < epsilon < 1"));
        }
        check_gamma(prefix, self.gamma, &mut out);
        if !(0.0..=1.0).contains(&self.lambda) {
            out.push(Violation::new(format!("{prefix}lambda"), "0 ≤ λ ≤ 1"));
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.rollout_length == 0 {
            out.push(Violation::new(
                format!("{prefix}rollout_length"),
                "epochs, minibatch size and rollout length > 0",
            ));
        }
        out
    }
}

/// Scalar PPO objective and its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoLoss {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// `-mean(min(ρA, clip(ρ)A)) + c_v·mean((v - R)²) - c_e·mean(H)`.
pub fn ppo_loss(
    old_log_probs: &[f64],
    new_log_probs: &[f64],
    advantages: &[f64],
    values: &[f64],
    returns: &[f64],
    entropies: &[f64],
    cfg: &PpoConfig,
) -> Result<PpoLoss> {
    let n = old_log_probs.len();
    for len in [new_log_probs.len(), advantages.len(), values.len(), returns.len(), entropies.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, actual: len });
        }
    }
    if n == 0 {
        return Err(Error::Usage("empty PPO batch".into()));
    }
    let eps = cfg.clip_epsilon;
    let (mut policy, mut value, mut entropy, mut clipped, mut kl) = (0.0, 0.0, 0.0, 0usize, 0.0);
    for i in 0..n {
        let log_ratio = new_log_probs[i] - old_log_probs[i];
        let ratio = log_ratio.exp();
        if !ratio.is_finite() {
            return Err(Error::Numeric {
                index: i,
                detail: format!("probability ratio {ratio}"),
            });
        }
        policy -= clipped_surrogate(ratio, advantages[i], eps);
        value += (values[i] - returns[i]).powi(2);
        entropy += entropies[i];
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }
        kl += (ratio - 1.0) - log_ratio;
    }
    let n = n as f64;
    let (policy, value, entropy) = (policy / n, value / n, entropy / n);
    Ok(PpoLoss {
        total: policy + cfg.value_coef * value - cfg.entropy_coef * entropy,
        policy,
        value,
        entropy,
        clip_fraction: clipped as f64 / n,
        approx_kl: kl / n,
    })
}

/// Per-sample loss and its derivative with respect to the network output.
pub fn ppo_sample_grad(
    out: &[f64],
    action: Action,
    old_log_prob: f64,
    advantage: f64,
    ret: f64,
    cfg: &PpoConfig,
) -> (f64, Vec<f64>) {
    let logits = &out[..2];
    let value = out[2];
    let log_ratio = log_softmax2(logits)[action.index()] - old_log_prob;
    let ratio = log_ratio.exp();
    let eps = cfg.clip_epsilon;
    let surrogate = clipped_surrogate(ratio, advantage, eps);
    let entropy = entropy2(logits);
    let loss = -surrogate + cfg.value_coef * (value - ret).powi(2) - cfg.entropy_coef * entropy;

    let saturated = (advantage >= 0.0 && ratio > 1.0 + eps) || (advantage < 0.0 && ratio < 1.0 - eps);
    let dlp = d_log_prob(logits, action);
    let dh = d_entropy(logits);
    let mut d = vec![0.0; 3];
    for k in 0..2 {
        let surrogate_grad = if saturated { 0.0 } else { advantage * ratio * dlp[k] };
        d[k] = -surrogate_grad - cfg.entropy_coef * dh[k];
    }
    d[2] = 2.0 * cfg.value_coef * (value - ret);
    (loss, d)
}

/// On-policy storage for one PPO iteration.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub features: Vec<[f64; FEATURE_DIM]>,
    pub actions: Vec<Action>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminals: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, x: [f64; FEATURE_DIM], action: Action, log_prob: f64, value: f64, reward: f64, terminal: bool) {
        self.features.push(x);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.values.push(value);
        self.rewards.push(reward);
        self.terminals.push(terminal);
    }

    /// Computes advantages and returns; optionally standardizes advantages.
    pub fn finish(&mut self, bootstrap: f64, gamma: f64, lambda: f64, normalize: bool) {
        let (adv, ret) = gae_advantages(&self.rewards, &self.values, &self.terminals, bootstrap, gamma, lambda);
        self.advantages = adv;
        self.returns = ret;
        if normalize {
            normalize_in_place(&mut self.advantages);
        }
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }
}

pub(crate) fn normalize_in_place(xs: &mut [f64]) {
    if xs.len() < 2 {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    for x in xs {
        *x = (*x - mean) / std;
    }
}

pub(super) fn train(
    env: GateEnv,
    cfg: &TrainingConfig,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(Checkpoint, Vec<CurvePoint>)> {
    let ppo = &cfg.ppo;
    let mut net = Approximator::new(&cfg.dims(Heads::ActorCritic.outputs()), rng);
    let mut opt = Adam::new(ppo.optimizer, &net);
    let mut runner = EpisodeRunner::new(env.clone(), cfg.features, seed, 0)?;
    let mut evaluator = Evaluator::new(env, cfg);
    let mut guard = NumericGuard::new(AgentKind::Ppo);
    let mut curve = Vec::new();
    let mut buffer = RolloutBuffer::default();
    let mut step = 0u64;
    let mut last_diag: Option<(f64, f64)> = None;

    loop {
        if evaluator.due(step) || step >= cfg.total_steps {
            let mut point = evaluator.run(step, &net)?;
            if let Some((clip, kl)) = last_diag {
                point.clip_fraction = Some(clip);
                point.kl = Some(kl);
            }
            if curve.last().map(|p: &CurvePoint| p.step) != Some(step) {
                curve.push(point);
            }
        }
        if step >= cfg.total_steps {
            break;
        }

        buffer.clear();
        let len = (ppo.rollout_length as u64).min(cfg.total_steps - step) as usize;
        for _ in 0..len {
            let x = runner.features()?;
            let out = net.forward(&x)?;
            let (action, log_prob) = act(&out[..2], ActMode::Sample, rng);
            let (reward, terminal) = runner.step(action)?;
            buffer.push(x, action, log_prob, out[2], reward, terminal);
        }
        step += len as u64;
        let bootstrap = if *buffer.terminals.last().expect("non-empty rollout") {
            0.0
        } else {
            net.forward(&runner.features()?)?[2]
        };
        buffer.finish(bootstrap, ppo.gamma, ppo.lambda, ppo.normalize_advantages);

        let mut order: Vec<usize> = (0..buffer.len()).collect();
        let (mut clipped, mut kl, mut count) = (0.0, 0.0, 0usize);
        for _ in 0..ppo.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(ppo.minibatch_size) {
                let batch: Vec<Vec<f64>> = chunk.iter().map(|&i| buffer.features[i].to_vec()).collect();
                let result = gradients(&net, &batch, |j, out| {
                    let i = chunk[j];
                    let lp = log_softmax2(&out[..2])[buffer.actions[i].index()];
                    let log_ratio = lp - buffer.log_probs[i];
                    let ratio = log_ratio.exp();
                    if (ratio - 1.0).abs() > ppo.clip_epsilon {
                        clipped += 1.0;
                    }
                    kl += (ratio - 1.0) - log_ratio;
                    count += 1;
                    ppo_sample_grad(out, buffer.actions[i], buffer.log_probs[i], buffer.advantages[i], buffer.returns[i], ppo)
                });
                if let Some((_, grads)) = guard.check(step, result)? {
                    opt.step(&mut net, grads);
                }
            }
        }
        if count > 0 {
            last_diag = Some((clipped / count as f64, kl / count as f64));
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
