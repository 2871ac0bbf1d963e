//! HTTP API over a skycast store: point forecasts, routes, recommendations,
//! heatmaps and cluster maps, plus a replayable observation provider.

pub mod api;
pub mod config;
pub mod grid;
pub mod provider;
pub mod state;

use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use thiserror::Error;
use tracing::info;

pub use api::{router, ErrorBody, VERSION_HEADER};
pub use config::ApiConfig;
pub use state::{AppState, StartupError};

use config::ProviderMode;
use provider::ReplayProvider;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Startup(#[from] StartupError),
    #[error("provider: {0}")]
    Provider(#[from] provider::ProviderError),
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

/// Runs the service until Ctrl-C.
pub async fn serve(config: ApiConfig) -> Result<(), ServeError> {
    let state = Arc::new(AppState::from_config(&config)?);
    let addr = config.listen_addr().map_err(StartupError::from)?;

    if let ProviderMode::Replay {
        fixtures,
        interval_secs,
        region,
    } = &config.provider
    {
        let mut provider = ReplayProvider::new(fixtures)?;
        let (state, region, every) = (state.clone(), *region, Duration::from_secs(*interval_secs));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            loop {
                tick.tick().await;
                let s = state.clone();
                let (report, p) = tokio::task::spawn_blocking(move || {
                    let r = s.poll(&mut provider, region.as_ref(), Utc::now().date_naive());
                    (r, provider)
                })
                .await
                .expect("provider poll panicked");
                provider = p;
                if let Some(v) = report.published {
                    info!("provider published snapshot v{v} ({} observations)", report.observations);
                }
            }
        });
    }

    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, config.ui_dir.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
