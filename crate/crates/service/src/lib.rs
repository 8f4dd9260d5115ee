//! HTTP/JSON service over a shared [`simsearch_core::Index`].
//!
//! Routes: `POST /v1/items`, `POST /v1/search`, `POST /v1/feedback`,
//! `POST /v1/evict`, `GET /v1/stats`, `GET /healthz`, `POST /v1/snapshot`,
//! `POST /v1/restore`.

mod config;
mod error;
mod feedback;
mod handlers;

use std::future::Future;
use std::sync::atomic::AtomicU64;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use parking_lot::Mutex;
use simsearch_core::SharedIndex;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use config::{ServiceConfig, DEFAULT_BODY_LIMIT, DEFAULT_QUERY_CACHE, DEFAULT_RETENTION_S};
pub use error::{ApiError, ApiResult};
pub use feedback::{FeedbackRecord, FeedbackStore};
pub use handlers::{parse_mode, ItemsResponse, SearchRequest, SearchResponse, SnapshotResponse};

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    index: SharedIndex,
    config: ServiceConfig,
    feedback: Mutex<FeedbackStore>,
    next_ref: AtomicU64,
    ref_salt: u64,
}

impl AppState {
    pub fn new(index: SharedIndex, config: ServiceConfig) -> Self {
        let feedback = FeedbackStore::new(config.query_cache, config.feedback_log.clone());
        let ref_salt = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        Self {
            inner: Arc::new(Inner {
                index,
                config,
                feedback: Mutex::new(feedback),
                next_ref: AtomicU64::new(0),
                ref_salt,
            }),
        }
    }

    pub fn index(&self) -> &SharedIndex {
        &self.inner.index
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.config().body_limit;
    Router::new()
        .route("/v1/items", post(handlers::post_items))
        .route("/v1/search", post(handlers::search))
        .route("/v1/feedback", post(handlers::feedback))
        .route("/v1/evict", post(handlers::evict))
        .route("/v1/stats", get(handlers::stats))
        .route("/v1/snapshot", post(handlers::snapshot))
        .route("/v1/restore", post(handlers::restore))
        .route("/healthz", get(handlers::healthz))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Evicts entries older than `retention_s` every `evict_interval_s`, if configured.
pub fn spawn_evictor(state: &AppState) -> Option<JoinHandle<()>> {
    let every = state.config().evict_interval_s.filter(|&s| s > 0)?;
    let state = state.clone();
    Some(tokio::spawn(async move {
        let mut ticker = tokio::time::interval(Duration::from_secs(every));
        ticker.tick().await;
        loop {
            ticker.tick().await;
            let cutoff = simsearch_core::now_secs().saturating_sub(state.config().retention_s);
            let evicted = state.index().write().evict_older_than(cutoff);
            if evicted > 0 {
                tracing::info!(evicted, cutoff, "periodic eviction");
            }
        }
    }))
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let evictor = spawn_evictor(&state);
    let result = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await;
    if let Some(task) = evictor {
        task.abort();
    }
    result
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
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
}
