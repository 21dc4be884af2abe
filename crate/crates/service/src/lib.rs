//! JSON API for configuring, launching, monitoring and exploring alignment
//! runs. All routes live under `/api/v1`:
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/meta/models` | models, shared parameters, dataset profiles |
//! | GET | `/meta/defaults?model=&dataset=` | pre-filled run config |
//! | GET, POST | `/runs` | list runs; launch one (201, 400, 409) |
//! | GET | `/runs/{id}` | run handle |
//! | POST | `/runs/{id}/cancel` | request cancellation |
//! | GET | `/runs/{id}/progress` | handle plus the append-only epoch series |
//! | GET | `/runs/{id}/report` | final metrics of both modes |
//! | GET | `/runs/{id}/results` | paged candidate lists |
//! | GET | `/runs/{id}/entities/{eid}` | one candidate list plus ego-graphs |
//! | GET | `/runs/{id}/projection` | 2-D PCA of pair embeddings |
//!
//! One run may be active at a time. Training runs on its own thread; the
//! handlers only copy snapshots.

mod api;
mod state;
pub mod views;

use std::future::Future;

pub use api::{router, ApiError, DEFAULT_PAGE, MAX_PAGE, META_VERSION};
pub use state::{AppState, EpochPoint, LaunchError, Run, RunHandle, RunResults, RunState, ServiceOptions};

/// Serves `state` on `listener` until `shutdown` resolves, then cancels
/// active runs and waits for their jobs to flush.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let on_signal = state.clone();
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(async move {
            shutdown.await;
            tracing::info!("shutting down");
            on_signal.cancel_all();
        })
        .await?;
    tokio::task::spawn_blocking(move || state.shutdown())
        .await
        .map_err(std::io::Error::other)
}
