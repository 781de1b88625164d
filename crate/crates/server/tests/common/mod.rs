#![allow(dead_code)]

use std::sync::Arc;

use aigate::approx::Checkpoint;
use aigate::policy::failure_threshold_network;
use aigate::Config;
use aigate_server::store::Clock;
use aigate_server::{router, AppState};
use serde_json::{json, Value};

pub struct Server {
    pub base: String,
    pub client: reqwest::Client,
    pub state: Arc<AppState>,
}

pub fn threshold_checkpoint() -> Checkpoint {
    let caps = Config::default().training.features;
    Checkpoint::new(failure_threshold_network(3, &caps).unwrap())
}

pub fn state(cfg: &Config, clock: Option<Arc<dyn Clock>>) -> AppState {
    let mut state = AppState::new(cfg)
        .unwrap()
        .with_checkpoint("threshold", &threshold_checkpoint(), cfg)
        .unwrap();
    if let Some(clock) = clock {
        state = state.with_clock(clock);
    }
    state
}

pub async fn spawn_state(state: Arc<AppState>) -> Server {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(state.clone());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Server {
        base: format!("http://{addr}"),
        client: reqwest::Client::new(),
        state,
    }
}

pub async fn spawn(cfg: &Config) -> Server {
    spawn_state(state(cfg, None).start().unwrap()).await
}

impl Server {
    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.client.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn create(&self, condition: &str) -> String {
        let (status, body) = self.post("/sessions", json!({ "condition": condition })).await;
        assert_eq!(status, 201, "{body}");
        body["session_id"].as_str().unwrap().to_string()
    }

    pub async fn answer(&self, id: &str, question: &str, correct: bool, ts: &str) -> (u16, Value) {
        self.post(
            &format!("/sessions/{id}/events"),
            json!({ "type": "answer_submitted", "question_id": question, "correct": correct, "ts": ts }),
        )
        .await
    }
}

/// Timestamp `secs` seconds after `base`.
pub fn at(base: chrono::DateTime<chrono::Utc>, secs: f64) -> String {
    (base + chrono::Duration::milliseconds((secs * 1000.0) as i64)).to_rfc3339()
}
