//! Synchronous advantage actor-critic over a small set of parallel episode
//! streams, one update per collected segment.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ppo::normalize_in_place;
use super::{
    act, check_gamma, d_entropy, d_log_prob, entropy2, gae_advantages, log_softmax2, ActMode,
    AgentKind, CurvePoint, EpisodeRunner, Evaluator, NumericGuard, TrainingConfig,
};
use crate::approx::{gradients, Adam, AdamConfig, Approximator, Checkpoint, RngState};
use crate::domain::Action;
use crate::env::GateEnv;
use crate::error::{Error, Result, Violation};
use crate::policy::Heads;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A2cConfig {
    pub gamma: f64,
    /// GAE λ; 1.0 gives plain n-step returns.
    pub lambda: f64,
    pub n_steps: usize,
    pub num_envs: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub normalize_advantages: bool,
    pub optimizer: AdamConfig,
}

impl Default for A2cConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 1.0,
            n_steps: 16,
            num_envs: 8,
            value_coef: 0.5,
            entropy_coef: 0.01,
            normalize_advantages: false,
            optimizer: AdamConfig {
                learning_rate: 7e-4,
                ..AdamConfig::default()
            },
        }
    }
}

impl A2cConfig {
    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        check_gamma(prefix, self.gamma, &mut out);
        if !(0.0..=1.0).contains(&self.lambda) {
            out.push(Violation::new(format!("{prefix}lambda"), "0 ≤ λ ≤ 1"));
        }
        if self.n_steps == 0 || self.num_envs == 0 {
            out.push(Violation::new(format!("{prefix}n_steps"), "n_steps and num_envs > 0"));
        }
        out
    }
}

/// `-mean(log π·A) + c_v·mean((v - R)²) - c_e·mean(H)`.
pub fn a2c_loss(
    log_probs: &[f64],
    advantages: &[f64],
    values: &[f64],
    returns: &[f64],
    entropies: &[f64],
    cfg: &A2cConfig,
) -> Result<f64> {
    let n = log_probs.len();
    for len in [advantages.len(), values.len(), returns.len(), entropies.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, actual: len });
        }
    }
    if n == 0 {
        return Err(Error::Usage("empty A2C batch".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        total += -log_probs[i] * advantages[i] + cfg.value_coef * (values[i] - returns[i]).powi(2)
            - cfg.entropy_coef * entropies[i];
    }
    Ok(total / n as f64)
}

/// Per-sample loss and its derivative with respect to `[deny, allow, value]`.
pub fn a2c_sample_grad(out: &[f64], action: Action, advantage: f64, ret: f64, cfg: &A2cConfig) -> (f64, Vec<f64>) {
    let logits = &out[..2];
    let lp = log_softmax2(logits)[action.index()];
    let loss = -lp * advantage + cfg.value_coef * (out[2] - ret).powi(2) - cfg.entropy_coef * entropy2(logits);
    let dlp = d_log_prob(logits, action);
    let dh = d_entropy(logits);
    let d = vec![
        -advantage * dlp[0] - cfg.entropy_coef * dh[0],
        -advantage * dlp[1] - cfg.entropy_coef * dh[1],
        2.0 * cfg.value_coef * (out[2] - ret),
    ];
    (loss, d)
}

struct Segment {
    inputs: Vec<Vec<f64>>,
    actions: Vec<Action>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

pub(super) fn train(
    env: GateEnv,
    cfg: &TrainingConfig,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(Checkpoint, Vec<CurvePoint>)> {
    let a2c = &cfg.a2c;
    let mut net = Approximator::new(&cfg.dims(Heads::ActorCritic.outputs()), rng);
    let mut opt = Adam::new(a2c.optimizer, &net);
    let mut runners = (0..a2c.num_envs as u64)
        .map(|k| EpisodeRunner::new(env.clone(), cfg.features, seed, k))
        .collect::<Result<Vec<_>>>()?;
    let mut evaluator = Evaluator::new(env, cfg);
    let mut guard = NumericGuard::new(AgentKind::A2c);
    let mut curve = Vec::new();
    let mut step = 0u64;

    loop {
        if evaluator.due(step) || step >= cfg.total_steps {
            let point = evaluator.run(step, &net)?;
            if curve.last().map(|p: &CurvePoint| p.step) != Some(step) {
                curve.push(point);
            }
        }
        if step >= cfg.total_steps {
            break;
        }

        let mut seg = Segment {
            inputs: Vec::new(),
            actions: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
        };
        for runner in runners.iter_mut() {
            let (mut rewards, mut values, mut terminals) = (Vec::new(), Vec::new(), Vec::new());
            for _ in 0..a2c.n_steps {
                if step >= cfg.total_steps {
                    break;
                }
                let x = runner.features()?;
                let out = net.forward(&x)?;
                let (action, _) = act(&out[..2], ActMode::Sample, rng);
                let (reward, terminal) = runner.step(action)?;
                seg.inputs.push(x.to_vec());
                seg.actions.push(action);
                rewards.push(reward);
                values.push(out[2]);
                terminals.push(terminal);
                step += 1;
            }
            if rewards.is_empty() {
                continue;
            }
            let bootstrap = if *terminals.last().expect("non-empty") {
                0.0
            } else {
                net.forward(&runner.features()?)?[2]
            };
            let (adv, ret) = gae_advantages(&rewards, &values, &terminals, bootstrap, a2c.gamma, a2c.lambda);
            seg.advantages.extend(adv);
            seg.returns.extend(ret);
        }
        if a2c.normalize_advantages {
            normalize_in_place(&mut seg.advantages);
        }
        let result = gradients(&net, &seg.inputs, |i, out| {
            a2c_sample_grad(out, seg.actions[i], seg.advantages[i], seg.returns[i], a2c)
        });
        if let Some((_, grads)) = guard.check(step, result)? {
            opt.step(&mut net, grads);
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

    #[test]
    fn per_sample_losses_average_to_batch_loss() {
        let cfg = A2cConfig::default();
        let outs = [[0.1, 0.4, -0.2], [1.2, -0.7, 0.9]];
        let actions = [Action::Allow, Action::Deny];
        let adv = [0.8, -1.1];
        let ret = [0.3, 0.0];
        let lps: Vec<f64> = (0..2).map(|i| log_softmax2(&outs[i][..2])[actions[i].index()]).collect();
        let ents: Vec<f64> = outs.iter().map(|o| entropy2(&o[..2])).collect();
        let values: Vec<f64> = outs.iter().map(|o| o[2]).collect();
        let batch = a2c_loss(&lps, &adv, &values, &ret, &ents, &cfg).unwrap();
        let mean: f64 = (0..2).map(|i| a2c_sample_grad(&outs[i], actions[i], adv[i], ret[i], &cfg).0).sum::<f64>() / 2.0;
        assert!((batch - mean).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let cfg = A2cConfig::default();
        assert!(a2c_loss(&[0.0], &[0.0, 1.0], &[0.0], &[0.0], &[0.0], &cfg).is_err());
    }
}
