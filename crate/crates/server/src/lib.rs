//! HTTP API over fhirlit: bundle upload, catalogs, per-resource summaries
//! and streamed chat sessions.
//!
//! Chat turns are served as server-sent events whose `event:` field is the
//! event kind and whose `data:` field is the JSON-encoded session event.
//! Errors are JSON bodies of the form `{"status", "code", "message"}` with
//! `code` drawn from [`ErrorCode`].

mod config;
mod error;
mod metrics;
mod routes;
mod state;

use std::net::SocketAddr;
use std::time::{Duration, Instant};

pub use config::{default_mock, ConfigError, ServerConfig};
pub use error::{ApiError, ErrorCode};
pub use metrics::{Metrics, MetricsSnapshot};
pub use routes::{router, PatientView, ResourceView};
pub use state::{AppState, PatientRecord, SessionHandle, StartupError};

/// Binds `addr` and serves until Ctrl-C, evicting idle sessions in the
/// background.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let sweep_every = state.config().session_idle_timeout.clamp(Duration::from_secs(1), Duration::from_secs(60));
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut ticker = tokio::time::interval(sweep_every);
        loop {
            ticker.tick().await;
            let evicted = sweeper.evict_idle(Instant::now());
            if evicted > 0 {
                tracing::info!(evicted, "idle sessions evicted");
            }
        }
    });
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
