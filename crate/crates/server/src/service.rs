//! The long-running process: one ingestion thread per stream, a scoring
//! thread, a snapshot scheduler and the HTTP server.
//!
//! Ingestion hands new authors to the scorer through an unbounded channel so
//! it never waits on scoring, and builds run on the blocking pool so neither
//! waits on the other.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use bev_core::ingest::{open_source, SourceConfig};
use bev_core::store::Store;
use tokio::sync::watch;
use tokio::time::MissedTickBehavior;

use crate::api::{router, AppState};
use crate::config::ServiceConfig;
use crate::pipeline::{Pipeline, PipelineError};
use crate::status::{PipelineStatus, SourceState};

const MAX_BACKOFF: Duration = Duration::from_secs(30);
const POLL: Duration = Duration::from_millis(100);

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Serve(#[source] std::io::Error),
    #[error("worker panicked: {0}")]
    Worker(String),
}

/// A running service. Dropping it without [`ServiceHandle::shutdown`] leaves
/// the workers running until the runtime stops.
pub struct ServiceHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    shutdown: watch::Sender<bool>,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
    scheduler: tokio::task::JoinHandle<()>,
    workers: Vec<JoinHandle<()>>,
    pipeline: Arc<Pipeline>,
    status: Arc<PipelineStatus>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn store(&self) -> &Arc<Store> {
        self.pipeline.store()
    }

    pub fn status(&self) -> &Arc<PipelineStatus> {
        &self.status
    }

    /// Stops the server and workers. An in-flight build finishes first.
    pub async fn shutdown(self) -> Result<(), ServiceError> {
        self.stop.store(true, Ordering::Relaxed);
        let _ = self.shutdown.send(true);
        let _ = self.scheduler.await;
        let served = self.server.await.map_err(|e| ServiceError::Worker(e.to_string()))?;
        let (workers, pipeline) = (self.workers, self.pipeline);
        // Joining and the final drop of the scorer client both block.
        tokio::task::spawn_blocking(move || {
            let mut panicked = None;
            for w in workers {
                if w.join().is_err() {
                    panicked = Some(ServiceError::Worker("ingestion or scoring thread".into()));
                }
            }
            drop(pipeline);
            panicked.map_or(Ok(()), Err)
        })
        .await
        .map_err(|e| ServiceError::Worker(e.to_string()))??;
        served.map_err(ServiceError::Serve)?;
        tracing::info!("service stopped");
        Ok(())
    }
}

fn sleep_unless_stopped(stop: &AtomicBool, total: Duration) {
    let deadline = Instant::now() + total;
    while !stop.load(Ordering::Relaxed) {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            break;
        }
        std::thread::sleep(left.min(POLL));
    }
}

fn backoff(failures: u32) -> Duration {
    (Duration::from_millis(200) * 2u32.saturating_pow(failures.saturating_sub(1).min(16))).min(MAX_BACKOFF)
}

fn ingestion_worker(
    pipeline: Arc<Pipeline>,
    status: Arc<PipelineStatus>,
    cfg: SourceConfig,
    authors: mpsc::Sender<String>,
    stop: Arc<AtomicBool>,
) {
    let stream = cfg.stream;
    let mut failures = 0u32;
    while !stop.load(Ordering::Relaxed) {
        let source = match open_source(&cfg) {
            Ok(s) => s,
            Err(err) => {
                failures += 1;
                tracing::warn!(%stream, %err, failures, "source failed to open; retrying");
                status.update_source(stream, |p| {
                    p.state = SourceState::Retrying;
                    p.failures = failures;
                    p.last_error = Some(err.to_string());
                });
                sleep_unless_stopped(&stop, backoff(failures));
                continue;
            }
        };
        status.update_source(stream, |p| p.state = SourceState::Running);
        let result = pipeline.drain(
            source,
            &stop,
            |author| {
                let _ = authors.send(author.to_string());
            },
            |stats| {
                status.update_source(stream, |p| {
                    p.read = stats.read;
                    p.appended = stats.appended;
                })
            },
        );
        match result {
            Ok(stats) => {
                let state = if stats.unconfigured {
                    SourceState::Unconfigured
                } else if stop.load(Ordering::Relaxed) {
                    SourceState::Stopped
                } else {
                    SourceState::Exhausted
                };
                tracing::info!(%stream, read = stats.read, appended = stats.appended, ?state, "source finished");
                status.update_source(stream, |p| p.state = state);
                return;
            }
            Err(err) => {
                // Appends are idempotent, so reopening and replaying is safe.
                failures += 1;
                tracing::warn!(%stream, %err, failures, "append failed; reopening source");
                status.update_source(stream, |p| {
                    p.state = SourceState::Retrying;
                    p.failures = failures;
                    p.last_error = Some(err.to_string());
                });
                sleep_unless_stopped(&stop, backoff(failures));
            }
        }
    }
    status.update_source(stream, |p| p.state = SourceState::Stopped);
}

fn scoring_worker(
    pipeline: Arc<Pipeline>,
    status: Arc<PipelineStatus>,
    authors: mpsc::Receiver<String>,
    stop: Arc<AtomicBool>,
    retry_every: Duration,
) {
    let scorer = pipeline.scorer().clone();
    let mut last_retry = Instant::now();
    let mut open = true;
    while !stop.load(Ordering::Relaxed) {
        if open {
            match authors.recv_timeout(POLL) {
                Ok(id) => {
                    let _ = scorer.get_score(&id);
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => open = false,
            }
        } else {
            std::thread::sleep(POLL);
        }
        if scorer.pending_len() > 0 && last_retry.elapsed() >= retry_every {
            let report = scorer.refresh_pending();
            tracing::debug!(?report, "retried pending scores");
            last_retry = Instant::now();
        }
        status.set_pending_scores(scorer.pending_len());
    }
}

/// Starts every component and returns once the listener is bound.
pub async fn start(config: ServiceConfig) -> Result<ServiceHandle, ServiceError> {
    config.validate().map_err(PipelineError::from)?;
    let sources = config.source_configs().map_err(PipelineError::from)?;
    let cfg = config.clone();
    let pipeline = tokio::task::spawn_blocking(move || Pipeline::open(&cfg))
        .await
        .map_err(|e| ServiceError::Worker(e.to_string()))??;
    let pipeline = Arc::new(pipeline);
    let status = Arc::new(PipelineStatus::default());

    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServiceError::Bind { addr: config.listen, source })?;
    let addr = listener.local_addr().map_err(|source| ServiceError::Bind { addr: config.listen, source })?;

    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();
    let mut workers = Vec::new();
    for cfg in sources {
        let (p, s, tx, stop) = (pipeline.clone(), status.clone(), tx.clone(), stop.clone());
        workers.push(
            std::thread::Builder::new()
                .name(format!("ingest-{}", cfg.stream))
                .spawn(move || ingestion_worker(p, s, cfg, tx, stop))
                .map_err(|e| ServiceError::Worker(e.to_string()))?,
        );
    }
    drop(tx);
    {
        let (p, s, stop, every) = (pipeline.clone(), status.clone(), stop.clone(), config.refresh_interval);
        workers.push(
            std::thread::Builder::new()
                .name("scorer".into())
                .spawn(move || scoring_worker(p, s, rx, stop, every))
                .map_err(|e| ServiceError::Worker(e.to_string()))?,
        );
    }

    let (shutdown, shutdown_rx) = watch::channel(false);
    let scheduler = tokio::spawn(scheduler(pipeline.clone(), status.clone(), config.refresh_interval, shutdown_rx.clone()));

    let state = AppState {
        store: pipeline.store().clone(),
        status: status.clone(),
        timeline_days: config.timeline_days,
        explorer_url_template: config.explorer_url_template.as_str().into(),
    };
    let mut server_rx = shutdown_rx;
    let server = tokio::spawn(async move {
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async move {
                let _ = server_rx.wait_for(|stopped| *stopped).await;
            })
            .await
    });
    tracing::info!(%addr, "serving");
    Ok(ServiceHandle { addr, stop, shutdown, server, scheduler, workers, pipeline, status })
}

/// Builds immediately, then once per interval until shutdown.
async fn scheduler(
    pipeline: Arc<Pipeline>,
    status: Arc<PipelineStatus>,
    every: Duration,
    mut shutdown: watch::Receiver<bool>,
) {
    let mut ticker = tokio::time::interval(every);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = ticker.tick() => {}
            _ = shutdown.wait_for(|stopped| *stopped) => break,
        }
        let p = pipeline.clone();
        let result = match tokio::task::spawn_blocking(move || p.build_snapshot()).await {
            Ok(Ok(snapshot)) => Ok(snapshot.snapshot_id),
            Ok(Err(err)) => {
                tracing::error!(%err, "snapshot build failed; previous snapshot stays live");
                Err(err.to_string())
            }
            Err(join) => Err(join.to_string()),
        };
        status.record_build(result);
    }
}

/// Resolves on Ctrl-C or SIGTERM.
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
        _ = ctrl_c => {}
        _ = term => {}
    }
}

/// Runs until a shutdown signal arrives.
pub async fn run(config: ServiceConfig) -> Result<(), ServiceError> {
    let handle = start(config).await?;
    shutdown_signal().await;
    tracing::info!("shutdown requested");
    handle.shutdown().await
}
