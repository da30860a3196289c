//! HTTP/JSON back end for the diet game.
//!
//! Every mutating request is appended and synced to the session's JSONL log
//! before the response is sent. Commands on one session are serialized; the
//! world and model are shared read-only.

pub mod api;
pub mod config;
pub mod error;
pub mod store;

use std::path::PathBuf;
use std::sync::Arc;

use axum::http::HeaderValue;
use axum::routing::get;
use axum::Router;
use clxai_core::game::Engine;
use clxai_core::predictor::TrainedModel;
use clxai_core::world::WorldConfig;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

pub use api::AppState;
pub use config::{Overrides, ServiceConfig, StudyText};
pub use error::{ApiError, ErrorCode};
pub use store::Store;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Core(#[from] clxai_core::Error),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server failed: {0}")]
    Server(std::io::Error),
    #[error("invalid CORS origin {0:?}")]
    Origin(String),
}

/// Loads world and model and opens the session store.
pub fn build_state(config: &ServiceConfig) -> Result<AppState, ServeError> {
    let world = match &config.world {
        Some(p) => WorldConfig::load(p)?,
        None => WorldConfig::default(),
    };
    let model = match &config.model {
        Some(p) => TrainedModel::load(p)?,
        None => TrainedModel::oracle(&world),
    };
    let engine = Engine::with_regenerated_stats(world, model)?;
    Ok(AppState {
        engine: Arc::new(engine),
        store: Arc::new(Store::open(&config.data_dir, config.snapshot_every)?),
        study: Arc::new(config.study.clone()),
        auth_token: config.auth_token.as_deref().map(Arc::from),
    })
}

/// Full application: API, health check, CORS and optional static client.
pub fn router(state: AppState, static_dir: Option<PathBuf>, cors_origin: Option<&str>) -> Result<Router, ServeError> {
    let cors = match cors_origin {
        Some(origin) => CorsLayer::new().allow_origin(
            origin
                .parse::<HeaderValue>()
                .map_err(|_| ServeError::Origin(origin.to_owned()))?,
        ),
        None => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);

    let mut app = Router::new()
        .nest("/api/v1", api::api_router(state.clone()))
        .route("/healthz", get(api::health));
    if let Some(dir) = static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    Ok(app.layer(cors).with_state(state))
}

/// Serves until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    let state = build_state(&config)?;
    let app = router(state, config.static_dir.clone(), config.cors_origin.as_deref())?;
    let listener = tokio::net::TcpListener::bind(&config.addr)
        .await
        .map_err(|source| ServeError::Bind {
            addr: config.addr.clone(),
            source,
        })?;
    tracing::info!(addr = %config.addr, data_dir = %config.data_dir.display(), "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServeError::Server)
}
