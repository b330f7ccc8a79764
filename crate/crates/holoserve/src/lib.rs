//! HTTP and WebSocket service for the holodeck viewer, plus the pieces the
//! `holodeck` command line uses.

pub mod api;
pub mod config;
pub mod relay;
pub mod session;
pub mod state;
pub mod stream;

use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

pub use api::router;
pub use config::{ServiceConfig, CONFIG_ENV};
pub use state::{AppState, Now};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("config: {0}")]
    Config(String),
    #[error("load: {0}")]
    Load(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Serves until `shutdown` resolves. Idle sessions are reaped in the
/// background.
pub async fn serve(
    state: Arc<AppState>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let reaper = {
        let state = state.clone();
        let period = Duration::from_secs_f64((state.config.session_grace_s / 4.0).clamp(0.05, 5.0));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                for id in state.reap() {
                    log::info!("session {id} expired");
                }
            }
        })
    };
    let result = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await;
    reaper.abort();
    Ok(result?)
}
