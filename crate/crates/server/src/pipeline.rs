//! The sources → store → scorer wiring shared by the long-running service
//! and one-shot ingestion.

use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use bev_core::ingest::{open_source, SessionStats, SourceError, SourceStatus, StreamKind, TweetSource};
use bev_core::scoring::{HttpBackend, MockBackend, ScoreBackend, Scorer, ScorerStats};
use bev_core::store::{Snapshot, Store, StoreError};
use chrono::Utc;
use serde::Serialize;

use crate::config::{ConfigError, ServiceConfig};

pub const BATCH_SIZE: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("scorer setup failed: {0}")]
    Scorer(String),
}

/// Outcome of draining one source into the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub stream: StreamKind,
    pub lines: u64,
    pub read: u64,
    pub skipped_malformed: u64,
    pub filtered_untracked: u64,
    pub thinned: u64,
    pub appended: u64,
    pub duplicates: u64,
    pub unconfigured: bool,
}

impl IngestStats {
    fn new(stream: StreamKind, session: SessionStats, unconfigured: bool) -> Self {
        Self {
            stream,
            lines: session.lines,
            read: 0,
            skipped_malformed: session.skipped_malformed,
            filtered_untracked: session.filtered_untracked,
            thinned: session.thinned,
            appended: 0,
            duplicates: 0,
            unconfigured,
        }
    }
}

pub struct Pipeline {
    config: ServiceConfig,
    store: Arc<Store>,
    scorer: Arc<Scorer>,
    /// Present when no scoring endpoint is configured.
    mock: Option<Arc<MockBackend>>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("data_dir", &self.config.data_dir).finish_non_exhaustive()
    }
}

impl Pipeline {
    /// Opens the store and builds the scorer, preloading the persisted score
    /// cache. Blocking.
    pub fn open(config: &ServiceConfig) -> Result<Self, PipelineError> {
        let store = Arc::new(Store::open(&config.data_dir)?);
        let (backend, mock): (Arc<dyn ScoreBackend>, _) = if config.scorer.endpoint.is_empty() {
            let mock = Arc::new(MockBackend::new());
            (mock.clone(), Some(mock))
        } else {
            let http = HttpBackend::new(&config.scorer.endpoint, config.scorer.timeout)
                .map_err(|e| PipelineError::Scorer(e.to_string()))?;
            (Arc::new(http), None)
        };
        let scorer = Scorer::new(config.scorer.scorer_config(), backend)
            .map_err(|e| PipelineError::Scorer(e.to_string()))?
            .with_persistence(store.clone());
        scorer.preload(store.persisted_scores()?, store.persisted_unscorable()?);
        Ok(Self { config: config.clone(), store, scorer: Arc::new(scorer), mock })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn scorer(&self) -> &Arc<Scorer> {
        &self.scorer
    }

    /// Feeds fixture ground truth to the mock scorer; a no-op against a real
    /// service.
    pub fn register_ground_truth(&self, source: &TweetSource) {
        if let Some(mock) = &self.mock {
            mock.register_all(source.ground_truth());
        }
    }

    /// Drains `source` into the store in batches, calling `on_author` once
    /// per distinct author. Stops early when `stop` is raised.
    pub fn drain(
        &self,
        mut source: TweetSource,
        stop: &AtomicBool,
        mut on_author: impl FnMut(&str),
        mut on_batch: impl FnMut(&IngestStats),
    ) -> Result<IngestStats, StoreError> {
        let mut stats =
            IngestStats::new(source.stream(), source.stats(), source.status() == SourceStatus::Unconfigured);
        self.register_ground_truth(&source);
        let mut seen = HashSet::new();
        let mut batch = Vec::with_capacity(BATCH_SIZE);
        loop {
            batch.clear();
            batch.extend(source.by_ref().take(BATCH_SIZE));
            if batch.is_empty() {
                break;
            }
            let report = self.store.append_tweets(&batch)?;
            stats.read += batch.len() as u64;
            stats.appended += report.acknowledged;
            stats.duplicates += report.duplicates;
            for t in &batch {
                if seen.insert(t.author_id().to_string()) {
                    on_author(t.author_id());
                }
            }
            on_batch(&stats);
            if stop.load(Ordering::Relaxed) {
                break;
            }
        }
        Ok(stats)
    }

    /// Builds and publishes a snapshot from everything stored so far.
    pub fn build_snapshot(&self) -> Result<Arc<Snapshot>, StoreError> {
        self.store.build_snapshot(Utc::now(), &self.scorer.score_table(), self.config.scorer.bot_threshold)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestOnceReport {
    pub sources: Vec<IngestStats>,
    pub stored_tweets: usize,
    pub scorer: ScorerSummary,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScorerSummary {
    pub requests: u64,
    pub cached: usize,
    pub pending: usize,
    pub unscorable: usize,
}

impl From<ScorerStats> for ScorerSummary {
    fn from(s: ScorerStats) -> Self {
        Self { requests: s.requests, cached: s.cached, pending: s.pending, unscorable: s.unscorable }
    }
}

/// Drains every configured source into the store and scores each author
/// once. Scores land in the persisted cache.
pub fn ingest_once(config: &ServiceConfig) -> Result<IngestOnceReport, PipelineError> {
    let sources = config.source_configs()?;
    let pipeline = Pipeline::open(config)?;
    let stop = AtomicBool::new(false);
    let mut reports = Vec::new();
    for cfg in &sources {
        let source = open_source(cfg)?;
        let scorer = pipeline.scorer.clone();
        let stats = pipeline.drain(
            source,
            &stop,
            |author| {
                // Empty ids never reach the store, so this cannot fail.
                let _ = scorer.get_score(author);
            },
            |_| {},
        )?;
        tracing::info!(stream = %stats.stream, appended = stats.appended, "ingested");
        reports.push(stats);
    }
    Ok(IngestOnceReport {
        sources: reports,
        stored_tweets: pipeline.store.stored_tweet_count(),
        scorer: pipeline.scorer.stats().into(),
    })
}
