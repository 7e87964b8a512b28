//! Persistent state: the raw tweet log, the score cache and published
//! snapshots.
//!
//! Layout under the data directory:
//!
//! - `raw/<stream>/<date>.ndjson`: append-only tweet log, one archive record
//!   per line, deduplicated by `(stream, tweet_id)`.
//! - `state/state.redb`: score cache, unscorable accounts, the snapshot id
//!   counter and the latest snapshot.
//!
//! Readers get `Arc<Snapshot>` handles that never change underneath them.
//! Builds are serialized and publish-or-nothing: a build either persists and
//! swaps in a complete snapshot or leaves the previous one live.

mod raw;
mod snapshot;
mod state;

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Duration, NaiveDate, Utc};

pub use raw::{AppendReport, LogSegment};
pub use snapshot::{compute_days, group_by_day, DaySnapshot, Snapshot};

use crate::ingest::Tweet;
use crate::par::Execution;
use crate::scoring::{BotScore, ScorePersistence, ScoreTable};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("state keyspace error: {0}")]
    State(#[from] redb::Error),
    #[error("state encoding error: {0}")]
    Encoding(#[from] serde_json::Error),
    #[error("no snapshot has been published yet")]
    WarmingUp,
    #[error("another snapshot build is in flight")]
    BuildInFlight,
    #[error("snapshot id {id} does not advance past {last}")]
    StaleSnapshotId { id: u64, last: u64 },
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    raw: raw::RawLog,
    state: state::StateDb,
    published: RwLock<Option<Arc<Snapshot>>>,
    build_lock: Mutex<()>,
}

impl Store {
    /// Opens (or creates) a data directory. The last persisted snapshot, if
    /// any, becomes the current one.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        let raw = raw::RawLog::open(root.join("raw"))?;
        let state = state::StateDb::open(&root.join("state"))?;
        let published = state.latest_snapshot()?.map(Arc::new);
        Ok(Self { root, raw, state, published: RwLock::new(published), build_lock: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Durably appends a batch, dropping tweets already stored for the same
    /// stream.
    pub fn append_tweets(&self, batch: &[Tweet]) -> Result<AppendReport, StoreError> {
        Ok(self.raw.append(batch)?)
    }

    pub fn stored_tweet_count(&self) -> usize {
        self.raw.len()
    }

    /// All stored tweets created at or before `as_of`, read from a consistent
    /// cut of the log.
    pub fn tweets_as_of(&self, as_of: DateTime<Utc>) -> Result<Vec<Tweet>, StoreError> {
        let mut out = Vec::new();
        for seg in self.raw.cut()? {
            if seg.date > as_of.date_naive() {
                continue;
            }
            out.extend(self.raw.read(&seg)?.into_iter().filter(|t| t.created_at() <= as_of));
        }
        Ok(out)
    }

    /// Removes raw segments older than `retain_days` days before `today`.
    pub fn prune_raw(&self, retain_days: u32, today: NaiveDate) -> Result<usize, StoreError> {
        let oldest_kept = today - Duration::days(i64::from(retain_days.max(1)) - 1);
        Ok(self.raw.prune_before(oldest_kept)?)
    }

    pub fn persisted_scores(&self) -> Result<Vec<BotScore>, StoreError> {
        self.state.scores()
    }

    pub fn persisted_unscorable(&self) -> Result<Vec<String>, StoreError> {
        self.state.unscorable()
    }

    /// Score table rebuilt from the persisted cache.
    pub fn score_table(&self) -> Result<ScoreTable, StoreError> {
        let mut table: ScoreTable = self.state.scores()?.into_iter().map(|s| (s.account_id, s.score)).collect();
        for id in self.state.unscorable()? {
            table.mark_unscorable(id);
        }
        Ok(table)
    }

    /// Recomputes a snapshot without publishing it.
    pub fn compute_snapshot(
        &self,
        as_of: DateTime<Utc>,
        scores: &ScoreTable,
        bot_threshold: f64,
        exec: Execution,
    ) -> Result<Snapshot, StoreError> {
        let tweets = self.tweets_as_of(as_of)?;
        let groups = group_by_day(tweets);
        let days = compute_days(&groups, scores, bot_threshold, exec);
        Ok(Snapshot {
            snapshot_id: self.state.last_snapshot_id()? + 1,
            built_at: Utc::now(),
            as_of,
            days,
        })
    }

    /// Recomputes, persists and publishes a snapshot. Fails with
    /// [`StoreError::BuildInFlight`] if another build is running; any failure
    /// leaves the previous snapshot current.
    pub fn build_snapshot(
        &self,
        as_of: DateTime<Utc>,
        scores: &ScoreTable,
        bot_threshold: f64,
    ) -> Result<Arc<Snapshot>, StoreError> {
        self.build_snapshot_with(as_of, scores, bot_threshold, Execution::default())
    }

    pub fn build_snapshot_with(
        &self,
        as_of: DateTime<Utc>,
        scores: &ScoreTable,
        bot_threshold: f64,
        exec: Execution,
    ) -> Result<Arc<Snapshot>, StoreError> {
        let _guard = self.build_lock.try_lock().map_err(|_| StoreError::BuildInFlight)?;
        let snapshot = self.compute_snapshot(as_of, scores, bot_threshold, exec)?;
        self.state.put_snapshot(&snapshot)?;
        let snapshot = Arc::new(snapshot);
        *self.published.write().unwrap() = Some(snapshot.clone());
        tracing::info!(id = snapshot.snapshot_id, days = snapshot.days.len(), "published snapshot");
        Ok(snapshot)
    }

    pub fn current_snapshot(&self) -> Result<Arc<Snapshot>, StoreError> {
        self.published.read().unwrap().clone().ok_or(StoreError::WarmingUp)
    }
}

impl ScorePersistence for Store {
    fn save_score(&self, score: &BotScore) -> Result<(), crate::scoring::PersistError> {
        Ok(self.state.put_score(score)?)
    }

    fn save_unscorable(&self, account_id: &str) -> Result<(), crate::scoring::PersistError> {
        Ok(self.state.put_unscorable(account_id)?)
    }
}
