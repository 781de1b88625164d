//! Gate policies: the fixed experimental conditions and learned networks.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::approx::{Approximator, Layer};
use crate::domain::{featurize, Action, FeatureCaps, GateObservation, FEATURE_DIM};
use crate::error::{Error, Result};

/// Output layout of a network, inferred from its output width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heads {
    /// `[logit_deny, logit_allow, value]`
    ActorCritic,
    /// `[q_deny, q_allow]`
    QValues,
}

impl Heads {
    pub fn outputs(self) -> usize {
        match self {
            Heads::ActorCritic => 3,
            Heads::QValues => 2,
        }
    }

    pub fn of(net: &Approximator) -> Result<Self> {
        if net.input_dim() != FEATURE_DIM {
            return Err(Error::IncompatibleCheckpoint(format!(
                "network expects {} inputs, observations have {FEATURE_DIM}",
                net.input_dim()
            )));
        }
        match net.output_dim() {
            3 => Ok(Heads::ActorCritic),
            2 => Ok(Heads::QValues),
            n => Err(Error::IncompatibleCheckpoint(format!("{n} output heads"))),
        }
    }
}

/// Index of the larger of the first two outputs; `Deny` on ties.
pub fn greedy_action(outputs: &[f64]) -> Action {
    if outputs[1] > outputs[0] {
        Action::Allow
    } else {
        Action::Deny
    }
}

/// A trained network acting greedily on featurized observations.
#[derive(Debug, Clone)]
pub struct NetworkPolicy {
    pub net: Arc<Approximator>,
    pub heads: Heads,
    pub caps: FeatureCaps,
}

impl NetworkPolicy {
    pub fn new(net: Approximator, caps: FeatureCaps) -> Result<Self> {
        let heads = Heads::of(&net)?;
        Ok(Self {
            net: Arc::new(net),
            heads,
            caps,
        })
    }

    pub fn outputs(&self, obs: &GateObservation) -> Result<Vec<f64>> {
        self.net.forward(&featurize(obs, &self.caps)?)
    }

    pub fn decide(&self, obs: &GateObservation) -> Result<Action> {
        Ok(greedy_action(&self.outputs(obs)?))
    }

    /// Probability of `Allow`: the softmax of the policy head, or the greedy
    /// indicator for a Q-network.
    pub fn allow_probability(&self, obs: &GateObservation) -> Result<f64> {
        let out = self.outputs(obs)?;
        Ok(match self.heads {
            Heads::ActorCritic => softmax2(out[0], out[1])[1],
            Heads::QValues => {
                if greedy_action(&out) == Action::Allow {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }
}

/// Hand-built actor-critic network that allows exactly when the current
/// question has at least `min_failures` failed attempts (1 ≤ min_failures ≤ cap).
pub fn failure_threshold_network(min_failures: u32, caps: &FeatureCaps) -> Result<Approximator> {
    let cap = caps.failed_attempts_question;
    if min_failures == 0 || min_failures > cap {
        return Err(Error::validation(
            "min_failures",
            format!("threshold must lie in 1..={cap}"),
        ));
    }
    // hidden = tanh(2·(s_fa − k + ½)): ±tanh(1) or beyond on either side.
    let mut hidden = Layer::zeros(FEATURE_DIM, 1);
    hidden.weights[0] = 2.0 * cap as f64;
    hidden.biases[0] = -2.0 * (min_failures as f64 - 0.5);
    let mut out = Layer::zeros(1, 3);
    out.weights[1] = 1.0;
    Approximator::from_layers(vec![hidden, out])
}

pub fn softmax2(a: f64, b: f64) -> [f64; 2] {
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    let z = ea + eb;
    [ea / z, eb / z]
}

#[derive(Debug, Clone)]
pub enum Policy {
    Always,
    Never,
    /// Allow with the given probability at every decision.
    Random(f64),
    Network(NetworkPolicy),
}

impl Policy {
    pub fn decide<R: Rng + ?Sized>(&self, obs: &GateObservation, rng: &mut R) -> Result<Action> {
        match self {
            Policy::Always => Ok(Action::Allow),
            Policy::Never => Ok(Action::Deny),
            Policy::Random(p) => Ok(if rng.random::<f64>() < *p {
                Action::Allow
            } else {
                Action::Deny
            }),
            Policy::Network(net) => net.decide(obs),
        }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Always => f.write_str("always"),
            Policy::Never => f.write_str("never"),
            Policy::Random(p) => write!(f, "random:{p}"),
            Policy::Network(_) => f.write_str("network"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    /// Parses `always`, `never` or `random:P`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "always" => Ok(Policy::Always),
            "never" => Ok(Policy::Never),
            _ => {
                let p = s
                    .strip_prefix("random:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| Error::validation("policy", format!("unknown policy {s:?}")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::validation("policy", "random probability in [0,1]"));
                }
                Ok(Policy::Random(p))
            }
        }
    }
}
