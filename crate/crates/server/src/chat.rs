//! Chat backends: a deterministic offline stub and an OpenAI-style
//! chat-completion client.

use std::time::Duration;

use aigate::config::{ChatBackendConfig, ChatMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ChatError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend answered {status}: {detail}")]
    Status {
        status: u16,
        detail: String,
        retry_after_seconds: Option<u64>,
    },
    #[error("unexpected backend response: {0}")]
    Malformed(String),
}

impl ChatError {
    /// Suggested client back-off.
    pub fn retry_after_seconds(&self) -> u64 {
        match self {
            ChatError::Status {
                retry_after_seconds: Some(s),
                ..
            } => *s,
            ChatError::Timeout(_) => 10,
            _ => 5,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ChatBackend {
    Stub {
        replies: Vec<String>,
    },
    External {
        client: reqwest::Client,
        endpoint: String,
        token: Option<String>,
        model: Option<String>,
        preamble: String,
        timeout: Duration,
    },
}

impl ChatBackend {
    /// Builds the backend; the auth token is read from the configured
    /// environment variable once, at startup.
    pub fn from_config(cfg: &ChatBackendConfig) -> Result<Self, String> {
        match cfg.mode {
            ChatMode::Stub => {
                if cfg.stub_replies.is_empty() {
                    return Err("stub mode requires at least one reply".into());
                }
                Ok(ChatBackend::Stub {
                    replies: cfg.stub_replies.clone(),
                })
            }
            ChatMode::External => {
                let endpoint = cfg.endpoint.clone().ok_or("external mode requires an endpoint")?;
                let token = match &cfg.auth_token_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| format!("environment variable {var} is not set"))?),
                    None => None,
                };
                let timeout = Duration::from_secs_f64(cfg.timeout_seconds);
                let client = reqwest::Client::builder()
                    .timeout(timeout)
                    .build()
                    .map_err(|e| e.to_string())?;
                Ok(ChatBackend::External {
                    client,
                    endpoint,
                    token,
                    model: cfg.model.clone(),
                    preamble: cfg.system_preamble.clone(),
                    timeout,
                })
            }
        }
    }

    pub async fn reply(&self, history: &[ChatMessage], message: &str) -> Result<String, ChatError> {
        match self {
            ChatBackend::Stub { replies } => Ok(stub_reply(replies, message).to_string()),
            ChatBackend::External {
                client,
                endpoint,
                token,
                model,
                preamble,
                timeout,
            } => {
                let mut messages = vec![ChatMessage {
                    role: Role::System,
                    content: preamble.clone(),
                }];
                messages.extend(history.iter().cloned());
                messages.push(ChatMessage {
                    role: Role::User,
                    content: message.to_string(),
                });
                let mut body = serde_json::json!({ "messages": messages });
                if let Some(model) = model {
                    body["model"] = serde_json::Value::String(model.clone());
                }
                let mut request = client.post(endpoint).json(&body);
                if let Some(token) = token {
                    request = request.bearer_auth(token);
                }
                let response = request.send().await.map_err(|e| {
                    if e.is_timeout() {
                        ChatError::Timeout(*timeout)
                    } else {
                        ChatError::Unreachable(e.to_string())
                    }
                })?;
                let status = response.status();
                if !status.is_success() {
                    let retry_after_seconds = response
                        .headers()
                        .get(reqwest::header::RETRY_AFTER)
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.parse().ok());
                    let detail = response.text().await.unwrap_or_default();
                    return Err(ChatError::Status {
                        status: status.as_u16(),
                        detail,
                        retry_after_seconds,
                    });
                }
                let value: serde_json::Value = response.json().await.map_err(|e| {
                    if e.is_timeout() {
                        ChatError::Timeout(*timeout)
                    } else {
                        ChatError::Malformed(e.to_string())
                    }
                })?;
                value["choices"][0]["message"]["content"]
                    .as_str()
                    .map(str::to_string)
                    .ok_or_else(|| ChatError::Malformed("missing choices[0].message.content".into()))
            }
        }
    }
}

/// Canned reply chosen by the SHA-256 of the message.
pub fn stub_reply<'a>(replies: &'a [String], message: &str) -> &'a str {
    let digest = Sha256::digest(message.as_bytes());
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    &replies[(u64::from_le_bytes(word) % replies.len() as u64) as usize]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_is_deterministic_and_uses_all_replies() {
        let replies: Vec<String> = (0..4).map(|i| format!("reply {i}")).collect();
        assert_eq!(stub_reply(&replies, "hello"), stub_reply(&replies, "hello"));
        let used: std::collections::HashSet<&str> =
            (0..200).map(|i| stub_reply(&replies, &format!("message {i}"))).collect();
        assert_eq!(used.len(), 4);
    }
}
