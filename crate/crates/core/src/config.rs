//! JSON configuration file: top-level keys `reward`, `tasks`, `student`,
//! `training` and `server`. Every field is optional; unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::TrainingConfig;
use crate::domain::{RewardConfig, TaskSpec};
use crate::error::{Error, Result, Violation};
use crate::student::StudentConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub reward: RewardConfig,
    pub tasks: TaskSpec,
    pub student: StudentConfig,
    pub training: TrainingConfig,
    pub server: ServerConfig,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format {
            what: "configuration".into(),
            detail: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_json(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let v = validate_config(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Hex SHA-256 of the canonical JSON form; stamped into checkpoints.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn sim(&self) -> crate::env::EnvConfig {
        crate::env::EnvConfig {
            reward: self.reward.clone(),
            tasks: self.tasks.clone(),
            student: self.student.clone(),
        }
    }
}

/// Collects every violated constraint, each tagged with its field path.
pub fn validate_config(cfg: &Config) -> Vec<Violation> {
    let mut out = cfg.reward.violations("reward.");
    out.extend(cfg.tasks.violations("tasks."));
    out.extend(cfg.student.violations("student."));
    out.extend(cfg.training.violations("training."));
    out.extend(cfg.server.violations("server."));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatMode {
    #[default]
    Stub,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatBackendConfig {
    pub mode: ChatMode,
    /// Chat-completion URL, e.g. `https://host/v1/chat/completions`.
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub auth_token_env: Option<String>,
    pub model: Option<String>,
    pub timeout_seconds: f64,
    pub system_preamble: String,
    /// Canned replies for stub mode, selected by a hash of the request.
    pub stub_replies: Vec<String>,
}

impl Default for ChatBackendConfig {
    fn default() -> Self {
        Self {
            mode: ChatMode::Stub,
            endpoint: None,
            auth_token_env: None,
            model: None,
            timeout_seconds: 30.0,
            system_preamble: "You are a helpful assistant supporting a student who is reading \
                              a short text and answering multiple-choice questions about it."
                .into(),
            stub_replies: vec![
                "Try re-reading the paragraph that introduces this idea and compare each option against it.".into(),
                "Several options can be correct here. Check each one independently against the text.".into(),
                "Think about which statements the text supports directly rather than by implication.".into(),
                "Summarise the key claim of the section in your own words, then revisit the options.".into(),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub session_idle_timeout_seconds: f64,
    /// Append-only session journal used to recover after a restart.
    pub journal_path: Option<String>,
    pub chat: ChatBackendConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            session_idle_timeout_seconds: 2.0 * 3600.0,
            journal_path: None,
            chat: ChatBackendConfig::default(),
        }
    }
}

impl ServerConfig {
    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.session_idle_timeout_seconds > 0.0) {
            out.push(Violation::new(
                format!("{prefix}session_idle_timeout_seconds"),
                "session_idle_timeout_seconds > 0",
            ));
        }
        if !(self.chat.timeout_seconds > 0.0) {
            out.push(Violation::new(format!("{prefix}chat.timeout_seconds"), "timeout > 0"));
        }
        match self.chat.mode {
            ChatMode::External if self.chat.endpoint.is_none() => out.push(Violation::new(
                format!("{prefix}chat.endpoint"),
                "external mode requires an endpoint",
            )),
            ChatMode::Stub if self.chat.stub_replies.is_empty() => out.push(Violation::new(
                format!("{prefix}chat.stub_replies"),
                "stub mode requires at least one reply",
            )),
            _ => {}
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        assert!(validate_config(&Config::default()).is_empty());
    }

    #[test]
    fn beta_below_alpha_reported() {
        let cfg = Config::from_json(r#"{"reward": {"alpha": 0.02, "beta": 0.01}}"#).unwrap();
        let v = validate_config(&cfg);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "reward.beta");
        assert_eq!(v[0].message, "beta ≥ alpha");
    }

    #[test]
    fn zero_tick_reported() {
        let cfg = Config::from_json(r#"{"reward": {"tick_seconds": 0}}"#).unwrap();
        let v = validate_config(&cfg);
        assert!(v.iter().any(|v| v.message == "tick_seconds > 0"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Config::from_json(r#"{"rewards": {}}"#).is_err());
        assert!(Config::from_json(r#"{"reward": {"c_success": 1}}"#).is_err());
    }

    #[test]
    fn all_violations_collected() {
        let cfg = Config::from_json(
            r#"{"reward": {"tick_seconds": 0, "beta": 0.0},
                "server": {"chat": {"mode": "external"}}}"#,
        )
        .unwrap();
        let paths: Vec<_> = validate_config(&cfg).into_iter().map(|v| v.path).collect();
        assert!(paths.contains(&"reward.tick_seconds".to_string()));
        assert!(paths.contains(&"reward.beta".to_string()));
        assert!(paths.contains(&"server.chat.endpoint".to_string()));
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = Config::default();
        assert_eq!(a.hash(), b.hash());
        b.reward.c_mt = 0.4;
        assert_ne!(a.hash(), b.hash());
    }
}
