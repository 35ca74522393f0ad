//! HTTP/JSON service over the hagp operations.
//!
//! Datasets and fitted models live in an in-memory registry for the life of
//! the process. Request and response bodies are defined in `hagp-api`.

mod error;
mod routes;
mod state;

use std::future::Future;
use std::net::SocketAddr;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use error::ServiceError;
pub use state::AppState;

/// Largest accepted request body.
pub const BODY_LIMIT: usize = 1 << 30;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(routes::health))
        .route("/v1/datasets", post(routes::create_dataset))
        .route("/v1/datasets/{id}", get(routes::get_dataset))
        .route("/v1/datasets/{id}/csv", get(routes::dataset_csv))
        .route("/v1/datasets/{id}/clean", post(routes::clean_dataset))
        .route("/v1/models/fit", post(routes::fit_model))
        .route("/v1/models/import", post(routes::import_model))
        .route("/v1/models/{id}", get(routes::get_model))
        .route("/v1/models/{id}/effects", post(routes::effects))
        .route("/v1/models/{id}/predict", post(routes::predict_model))
        .route("/v1/compare", post(routes::compare_models))
        .route("/v1/grid-search", post(routes::grid_search))
        .route("/v1/bench", post(routes::run_bench))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(listener: TcpListener, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    axum::serve(listener, router(AppState::new())).with_graceful_shutdown(shutdown).await
}

/// Binds `addr` and serves in a background task, returning the bound address.
pub async fn spawn(addr: &str) -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(async move { axum::serve(listener, router(AppState::new())).await });
    Ok((local, handle))
}
