//! Teacher platform: case library, sessions, and learner play over HTTP.
//!
//! Store layout:
//!
//! ```text
//! <store>/cases/<id>/case.json, media/...
//! <store>/sessions/<id>/config.json
//! <store>/sessions/<id>/players.jsonl
//! <store>/sessions/<id>/trace-<player>.jsonl
//! ```
//!
//! Play state lives only in the trace logs and is rebuilt on start.

pub mod api;
pub mod error;
pub mod library;
pub mod scores;
pub mod service;
pub mod session;

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::router;
pub use service::{system_clock, Clock, Service};

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}

/// Serves `service` until SIGINT or SIGTERM. `on_ready` receives the bound
/// address. Every acknowledged event is already on disk, so shutdown has
/// nothing to flush.
pub async fn serve(
    service: Arc<Service>,
    port: u16,
    ui_dir: Option<PathBuf>,
    on_ready: impl FnOnce(SocketAddr),
) -> io::Result<()> {
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], port))).await?;
    let addr = listener.local_addr()?;
    tracing::info!("listening on {addr}");
    on_ready(addr);
    axum::serve(listener, router(service, ui_dir))
        .with_graceful_shutdown(shutdown_signal())
        .await
}
