//! Reinforcement-learning gate deciding when a learner may use a generative
//! AI assistant during a fixed three-task curriculum.

// `!(x > 0.0)` is deliberate throughout validation: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod approx;
pub mod config;
pub mod domain;
pub mod env;
pub mod error;
pub mod gate;
pub mod harness;
pub mod policy;
pub mod progress;
pub mod reward;
pub mod student;

pub use config::Config;
pub use domain::{featurize, Action, FeatureCaps, GateObservation, RewardConfig, TaskSpec};
pub use env::{EnvConfig, GateEnv};
pub use error::{Error, Result, Violation};
pub use policy::Policy;
pub use reward::RewardBreakdown;

// The guide's snippets run as doc-tests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/reward.md")]
    mod reward {}
    #[doc = include_str!("../../../book/src/student.md")]
    mod student {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/gate.md")]
    mod gate {}
    #[doc = include_str!("../../../book/src/agents.md")]
    mod agents {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
}
