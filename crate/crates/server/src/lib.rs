//! HTTP API over corridor extraction jobs.
//!
//! ```text
//! GET  /api/health
//! GET  /api/corridors
//! GET  /api/datasets
//! GET  /api/jobs
//! POST /api/jobs
//! GET  /api/jobs/{id}
//! GET  /api/jobs/{id}/views/{hourly|heatmap|vehicle_types|avg_time|best_departure}
//! ```
//!
//! Jobs run in the background; clients poll the job until it is `Done` and
//! then read views, which are pure functions of the stored cube.

pub mod datasets;
pub mod jobs;
mod routes;

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::Router;
use gantryflow_core::{run_extraction, CorridorRegistry, ExtractionConfig};
use gantryflow_mr::JobConfig;
use tokio::net::TcpListener;
use tokio::sync::Semaphore;

pub use jobs::{JobOutput, JobRecord, JobRequest, JobStatus, JobStore, Overrides, StoreError};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub results_dir: PathBuf,
    pub corridors: CorridorRegistry,
    /// Extraction jobs allowed to run at once.
    pub max_jobs: usize,
    /// Engine workers per job unless the request overrides it.
    pub workers: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>, results_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            results_dir: results_dir.into(),
            corridors: CorridorRegistry::builtin(),
            max_jobs: 1,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    config: Arc<ServiceConfig>,
    store: Arc<JobStore>,
    permits: Arc<Semaphore>,
}

impl AppState {
    /// Opens the job store and queues any jobs left pending by a previous
    /// run. Must be called inside a Tokio runtime.
    pub fn open(config: ServiceConfig) -> Result<Self, StoreError> {
        let (store, requeue) = JobStore::open(&config.results_dir)?;
        let state = Self {
            permits: Arc::new(Semaphore::new(config.max_jobs.max(1))),
            config: Arc::new(config),
            store: Arc::new(store),
        };
        for id in requeue {
            tracing::info!(job = %id, "re-queuing pending job");
            state.spawn(id);
        }
        Ok(state)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> &JobStore {
        &self.store
    }

    fn spawn(&self, id: String) {
        let state = self.clone();
        tokio::spawn(async move { state.run(id).await });
    }

    async fn run(self, id: String) {
        let _permit = self.permits.clone().acquire_owned().await.expect("semaphore is never closed");
        let Some(record) = self.store.get(&id) else {
            return;
        };
        if let Err(e) = self.store.mark_running(&id) {
            tracing::error!(job = %id, "{e}");
            return;
        }
        tracing::info!(job = %id, dataset = %record.request.dataset, "job running");
        let config = Arc::clone(&self.config);
        let outcome = tokio::task::spawn_blocking(move || execute(&config, &record.request))
            .await
            .unwrap_or_else(|e| Err(format!("extraction task panicked: {e}")));
        let saved = match outcome {
            Ok(cube) => self.store.mark_done(&id, cube),
            Err(reason) => {
                tracing::warn!(job = %id, "job failed: {reason}");
                self.store.mark_failed(&id, reason)
            }
        };
        match saved {
            Ok(()) => tracing::info!(job = %id, "job finished"),
            Err(e) => tracing::error!(job = %id, "recording job outcome: {e}"),
        }
    }
}

fn execute(config: &ServiceConfig, request: &JobRequest) -> Result<gantryflow_core::StatsCube, String> {
    let info = datasets::find(&config.data_dir, &request.dataset)
        .ok_or_else(|| format!("dataset {} is no longer available", request.dataset))?;
    let dataset = datasets::load(&info).map_err(|e| e.to_string())?;
    let corridors = config.corridors.select(&request.corridors).map_err(|e| e.to_string())?;
    let mut extraction = ExtractionConfig::new(corridors);
    extraction.date_filter = request.date_range;
    if let Some(max) = request.overrides.max_travel_seconds {
        extraction.max_travel_seconds = max;
    }
    if let Some(strict) = request.overrides.strict_path {
        extraction.strict_path = strict;
    }
    let engine = JobConfig::default().with_workers(request.overrides.workers.unwrap_or(config.workers));
    run_extraction(&dataset, &extraction, &engine).map_err(|e| e.to_string())
}

pub fn router(state: AppState) -> Router {
    routes::router(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
