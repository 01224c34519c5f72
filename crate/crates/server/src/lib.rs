//! The dataserver: a persistent registry of indexed source datasets and the
//! `/v1` HTTP API that serves experts and recommendations.

pub mod api;
pub mod error;
pub mod store;

use std::sync::Arc;

pub use api::router;
pub use error::StoreError;
pub use store::{BuildOutcome, Registry};

/// Serves the API on `listener` until ctrl-c.
pub async fn serve(registry: Arc<Registry>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(registry))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
