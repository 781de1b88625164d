//! Session service that runs a gate policy against live learner events.
//!
//! Routes (JSON over HTTP, ISO-8601 UTC timestamps):
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/sessions` | `{condition, checkpoint?}` | `{session_id, ...}` |
//! | POST | `/sessions/{id}/events` | `{type, question_id?, correct?, ts}` | `{ai_allowed, task, question}` |
//! | GET | `/sessions/{id}/gate` | | `{ai_allowed, task, question}` |
//! | POST | `/sessions/{id}/chat` | `{message}` | `{reply}` or `{error: "gate_closed"}` |
//! | GET | `/sessions/{id}/export` | | session log document |
//! | GET | `/healthz` | | `{status: "ok"}` |
//!
//! Errors use a uniform `{error, detail}` body.

pub mod api;
pub mod chat;
pub mod error;
pub mod session;
pub mod store;

use std::sync::Arc;
use std::time::Duration;

pub use api::router;
pub use error::{ApiError, ErrorBody};
pub use session::{replay, SessionExport};
pub use store::AppState;

/// Serves until Ctrl-C, sweeping idle sessions once a minute.
pub async fn serve(state: Arc<AppState>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    let sweeper = {
        let state = state.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(60));
            loop {
                tick.tick().await;
                let removed = state.sweep_expired().await;
                if removed > 0 {
                    tracing::info!(removed, "expired idle sessions");
                }
            }
        })
    };
    let result = axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    sweeper.abort();
    result
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/server.md")]
mod book_server {}
