mod common;

use std::sync::Arc;

use aigate::gate::GateDecider;
use aigate::policy::NetworkPolicy;
use aigate::Config;
use aigate_server::replay;
use aigate_server::session::SessionExport;
use aigate_server::store::ManualClock;
use chrono::Utc;
use common::*;
use serde_json::json;

#[tokio::test]
async fn health() {
    let s = spawn(&Config::default()).await;
    assert_eq!(s.get("/healthz").await, (200, json!({ "status": "ok" })));
}

#[tokio::test]
async fn fixed_conditions() {
    let s = spawn(&Config::default()).await;
    let never = s.create("never").await;
    let t0 = Utc::now();
    for i in 0..10 {
        let (status, body) = s.answer(&never, "t1q1", false, &at(t0, i as f64)).await;
        assert_eq!(status, 200);
        assert_eq!(body["ai_allowed"], false);
    }
    let always = s.create("always").await;
    let (_, gate) = s.get(&format!("/sessions/{always}/gate")).await;
    assert_eq!(gate["ai_allowed"], true);
    assert_ne!(never, always);
    assert_eq!(never.len(), 22);
}

#[tokio::test]
async fn rl_needs_a_checkpoint() {
    let cfg = Config::default();
    let bare = aigate_server::AppState::new(&cfg).unwrap().start().unwrap();
    let s = spawn_state(bare).await;
    let (status, body) = s.post("/sessions", json!({ "condition": "rl" })).await;
    assert_eq!(status, 400);
    assert_eq!(body["error"], "configuration");
    let s = spawn(&cfg).await;
    let (status, body) = s.post("/sessions", json!({ "condition": "rl", "checkpoint": "missing" })).await;
    assert_eq!((status, body["error"].as_str()), (400, Some("configuration")));
}

#[tokio::test]
async fn threshold_policy_opens_after_three_failures_and_closes_on_next_task() {
    let s = spawn(&Config::default()).await;
    let id = s.create("rl").await;
    let (_, gate) = s.get(&format!("/sessions/{id}/gate")).await;
    assert_eq!(gate["ai_allowed"], false);
    let t0 = Utc::now();
    for (i, expected) in [false, false, true].into_iter().enumerate() {
        let (_, body) = s.answer(&id, "t1q1", false, &at(t0, 2.0 + i as f64)).await;
        assert_eq!(body["ai_allowed"], expected);
    }
    let (status, body) = s.post(&format!("/sessions/{id}/chat"), json!({ "message": "hint?" })).await;
    assert_eq!(status, 200, "{body}");
    for (i, q) in ["t1q1", "t1q2", "t1q3"].into_iter().enumerate() {
        s.answer(&id, q, true, &at(t0, 10.0 + i as f64)).await;
    }
    let (_, gate) = s.get(&format!("/sessions/{id}/gate")).await;
    assert_eq!((gate["ai_allowed"].as_bool(), gate["task"].as_u64()), (Some(false), Some(1)));
    let (_, export) = s.get(&format!("/sessions/{id}/export")).await;
    assert_eq!(export["ai_used"], json!([true, false]));
}

#[tokio::test]
async fn correct_answer_advances_question() {
    let s = spawn(&Config::default()).await;
    let id = s.create("never").await;
    let t0 = Utc::now();
    s.answer(&id, "t1q1", true, &at(t0, 1.0)).await;
    s.answer(&id, "t1q2", false, &at(t0, 2.0)).await;
    let (_, body) = s.answer(&id, "t1q2", true, &at(t0, 3.0)).await;
    assert_eq!((body["task"].as_u64(), body["question"].as_u64()), (Some(0), Some(2)));
    let (_, export) = s.get(&format!("/sessions/{id}/export")).await;
    let doc: SessionExport = serde_json::from_value(export).unwrap();
    let last = doc.decisions.last().unwrap();
    assert_eq!(last.observation.failed_attempts_question, 0);
    assert_eq!(last.observation.failed_attempts_task, 1);
}

#[tokio::test]
async fn ordering_sequencing_and_unknown_sessions() {
    let s = spawn(&Config::default()).await;
    let id = s.create("never").await;
    let t0 = Utc::now();
    assert_eq!(s.answer(&id, "t1q1", false, &at(t0, 10.0)).await.0, 200);
    let (status, body) = s.answer(&id, "t1q1", false, &at(t0, 9.0)).await;
    assert_eq!((status, body["error"].as_str()), (409, Some("out_of_order")));
    let (status, body) = s.answer(&id, "t1q3", true, &at(t0, 11.0)).await;
    assert_eq!((status, body["error"].as_str()), (409, Some("sequencing")));
    let (status, body) = s.answer(&id, "t9q9", true, &at(t0, 11.0)).await;
    assert_eq!((status, body["error"].as_str()), (400, Some("invalid_request")));
    let (status, body) = s.get("/sessions/nope/gate").await;
    assert_eq!((status, body["error"].as_str()), (404, Some("not_found")));
    assert!(body["detail"].is_string());
    let (status, body) = s.post(&format!("/sessions/{id}/events"), json!({ "type": "answer_submitted" })).await;
    assert_eq!((status, body["error"].as_str()), (400, Some("invalid_request")));
    let (status, _) = s.post(&format!("/sessions/{id}/events"), json!({ "type": "answer_submitted", "question_id": "t1q1", "ts": at(t0, 12.0) })).await;
    assert_eq!(status, 400);
    let (_, export) = s.get(&format!("/sessions/{id}/export")).await;
    assert_eq!(export["events"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn chat_gating_and_transcript() {
    let s = spawn(&Config::default()).await;
    let closed = s.create("never").await;
    let (status, body) = s.post(&format!("/sessions/{closed}/chat"), json!({ "message": "help" })).await;
    assert_eq!(status, 403);
    assert_eq!(body["error"], "gate_closed");
    let (_, export) = s.get(&format!("/sessions/{closed}/export")).await;
    assert_eq!(export["transcript"].as_array().unwrap().len(), 0);

    let open = s.create("always").await;
    let (_, a) = s.post(&format!("/sessions/{open}/chat"), json!({ "message": "what does paragraph 2 say?" })).await;
    let (_, b) = s.post(&format!("/sessions/{open}/chat"), json!({ "message": "what does paragraph 2 say?" })).await;
    assert_eq!(a["reply"], b["reply"]);
    let (_, export) = s.get(&format!("/sessions/{open}/export")).await;
    let transcript = export["transcript"].as_array().unwrap();
    assert_eq!(transcript.len(), 4);
    assert_eq!(transcript[0]["role"], "user");
    assert_eq!(transcript[1]["role"], "assistant");
}

#[tokio::test]
async fn export_lists_events_in_order_and_replays() {
    let s = spawn(&Config::default()).await;
    let id = s.create("rl").await;
    let (_, fresh) = s.get(&format!("/sessions/{id}/export")).await;
    assert_eq!(fresh["events"].as_array().unwrap().len(), 0);
    let t0 = Utc::now();
    let mut n = 0;
    for i in 0..4 {
        s.answer(&id, "t1q1", false, &at(t0, 7.0 * i as f64)).await;
        n += 1;
    }
    s.post(&format!("/sessions/{id}/events"), json!({ "type": "heartbeat", "ts": at(t0, 40.0) })).await;
    n += 1;
    let (_, export) = s.get(&format!("/sessions/{id}/export")).await;
    let doc: SessionExport = serde_json::from_value(export).unwrap();
    assert_eq!(doc.events.len(), n);
    assert!(doc.events.windows(2).all(|w| w[0].ts <= w[1].ts));
    let caps = Config::default().training.features;
    let decider = GateDecider::Network(NetworkPolicy::new(threshold_checkpoint().net, caps).unwrap());
    assert_eq!(replay(&doc, decider).unwrap(), doc.decisions);
}

#[tokio::test]
async fn idle_sessions_expire_but_gates_persist_until_then() {
    let clock = Arc::new(ManualClock::new(Utc::now()));
    let s = spawn_state(state(&Config::default(), Some(clock.clone())).start().unwrap()).await;
    let id = s.create("always").await;
    clock.advance(chrono::Duration::minutes(119));
    let (_, gate) = s.get(&format!("/sessions/{id}/gate")).await;
    assert_eq!(gate["ai_allowed"], true);
    clock.advance(chrono::Duration::minutes(2));
    let (status, body) = s.get(&format!("/sessions/{id}/gate")).await;
    assert_eq!((status, body["error"].as_str()), (404, Some("not_found")));

    let other = s.create("never").await;
    clock.advance(chrono::Duration::hours(3));
    assert_eq!(s.state.sweep_expired().await, 1);
    assert_eq!(s.get(&format!("/sessions/{other}/gate")).await.0, 404);
}

#[tokio::test]
async fn journal_recovers_sessions_after_restart() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("sessions.jsonl");
    let cfg = Config::default();
    let first = spawn_state(state(&cfg, None).with_journal(&journal).start().unwrap()).await;
    let id = first.create("rl").await;
    let t0 = Utc::now();
    for i in 0..3 {
        first.answer(&id, "t1q1", false, &at(t0, 1.0 + i as f64)).await;
    }
    first.post(&format!("/sessions/{id}/chat"), json!({ "message": "hi" })).await;
    let (_, before) = first.get(&format!("/sessions/{id}/export")).await;
    // Simulate a torn write at crash time.
    std::fs::OpenOptions::new()
        .append(true)
        .open(&journal)
        .and_then(|mut f| std::io::Write::write_all(&mut f, b"{\"op\":\"eve"))
        .unwrap();

    let second = spawn_state(state(&cfg, None).with_journal(&journal).start().unwrap()).await;
    let (status, after) = second.get(&format!("/sessions/{id}/export")).await;
    assert_eq!(status, 200);
    assert_eq!(before, after);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_requests_are_serialized() {
    let s = Arc::new(spawn(&Config::default()).await);
    let id = s.create("never").await;
    let t0 = Utc::now();
    let mut tasks = Vec::new();
    for worker in 0..8 {
        let s = s.clone();
        let id = id.clone();
        tasks.push(tokio::spawn(async move {
            let mut ok = 0;
            for i in 0..25 {
                let body = json!({ "type": "heartbeat", "ts": at(t0, (worker * 25 + i) as f64 * 0.001) });
                let (status, _) = s.post(&format!("/sessions/{id}/events"), body).await;
                assert!(status == 200 || status == 409, "status {status}");
                if status == 200 {
                    ok += 1;
                }
                if i % 5 == 0 {
                    assert_eq!(s.get(&format!("/sessions/{id}/gate")).await.0, 200);
                }
            }
            ok
        }));
    }
    let mut accepted = 0;
    for t in tasks {
        accepted += t.await.unwrap();
    }
    let (_, export) = s.get(&format!("/sessions/{id}/export")).await;
    let doc: SessionExport = serde_json::from_value(export).unwrap();
    // Every accepted event is logged exactly once and the log is ordered.
    assert_eq!(doc.events.len(), accepted);
    assert!(doc.events.windows(2).all(|w| w[0].ts <= w[1].ts));
}
