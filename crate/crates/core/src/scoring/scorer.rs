use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{Datelike, NaiveDate};

use super::backend::{FetchError, ScoreBackend};
use super::clock::{Clock, SystemClock};
use super::{BotScore, ScoreSource, ScoreTable, ScorerConfig, ScoringError, MAX_SCORE, MIN_SCORE};

pub type PersistError = Box<dyn std::error::Error + Send + Sync>;

/// Durable home for the score cache.
pub trait ScorePersistence: Send + Sync {
    fn save_score(&self, score: &BotScore) -> Result<(), PersistError>;
    fn save_unscorable(&self, account_id: &str) -> Result<(), PersistError>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreOutcome {
    Resolved(BotScore),
    /// Quota exhausted or service failure; queued for the next refresh.
    Pending,
    /// Nonexistent or protected account; excluded for good.
    Unscorable,
}

/// Daily request allowance shared by every fetch worker. The UTC day and the
/// number of requests spent on it live in one atomic word, so a day rollover
/// and an acquisition cannot interleave.
#[derive(Debug)]
pub struct RequestBudget {
    max_per_day: u32,
    state: AtomicU64,
}

fn day_number(day: NaiveDate) -> u64 {
    u64::from(day.num_days_from_ce() as u32)
}

impl RequestBudget {
    pub fn new(max_per_day: u32) -> Self {
        Self { max_per_day, state: AtomicU64::new(0) }
    }

    pub fn try_acquire(&self, today: NaiveDate) -> bool {
        let day = day_number(today);
        let mut current = self.state.load(Ordering::Acquire);
        loop {
            let (cur_day, used) = (current >> 32, current & 0xffff_ffff);
            let used = if cur_day == day { used } else { 0 };
            if used >= u64::from(self.max_per_day) {
                return false;
            }
            let next = (day << 32) | (used + 1);
            match self.state.compare_exchange_weak(current, next, Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) => return true,
                Err(actual) => current = actual,
            }
        }
    }

    pub fn used(&self, today: NaiveDate) -> u32 {
        let s = self.state.load(Ordering::Acquire);
        if s >> 32 == day_number(today) {
            (s & 0xffff_ffff) as u32
        } else {
            0
        }
    }

    pub fn remaining(&self, today: NaiveDate) -> u32 {
        self.max_per_day - self.used(today)
    }
}

#[derive(Debug, Default)]
struct PendingQueue {
    order: VecDeque<String>,
    members: HashSet<String>,
}

impl PendingQueue {
    fn push(&mut self, id: &str) {
        if self.members.insert(id.to_string()) {
            self.order.push_back(id.to_string());
        }
    }

    fn remove(&mut self, id: &str) {
        if self.members.remove(id) {
            self.order.retain(|x| x != id);
        }
    }

    fn drain(&mut self) -> Vec<String> {
        self.members.clear();
        self.order.drain(..).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScorerStats {
    pub requests: u64,
    pub cache_hits: u64,
    pub failures: u64,
    pub cached: usize,
    pub pending: usize,
    pub unscorable: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RefreshReport {
    pub resolved: usize,
    pub still_pending: usize,
    pub unscorable: usize,
}

/// Caching, quota-bounded score resolver. Readers share the cache; writers
/// are serialized by its lock.
pub struct Scorer {
    config: ScorerConfig,
    backend: Arc<dyn ScoreBackend>,
    clock: Arc<dyn Clock>,
    budget: RequestBudget,
    cache: RwLock<HashMap<String, BotScore>>,
    unscorable: RwLock<HashSet<String>>,
    pending: Mutex<PendingQueue>,
    persistence: Option<Arc<dyn ScorePersistence>>,
    requests: AtomicU64,
    cache_hits: AtomicU64,
    failures: AtomicU64,
}

impl std::fmt::Debug for Scorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scorer").field("config", &self.config).field("stats", &self.stats()).finish()
    }
}

impl Scorer {
    pub fn new(config: ScorerConfig, backend: Arc<dyn ScoreBackend>) -> Result<Self, ScoringError> {
        config.validate()?;
        Ok(Self {
            budget: RequestBudget::new(config.max_requests_per_day),
            config,
            backend,
            clock: Arc::new(SystemClock),
            cache: RwLock::default(),
            unscorable: RwLock::default(),
            pending: Mutex::default(),
            persistence: None,
            requests: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
            failures: AtomicU64::new(0),
        })
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_persistence(mut self, persistence: Arc<dyn ScorePersistence>) -> Self {
        self.persistence = Some(persistence);
        self
    }

    pub fn config(&self) -> &ScorerConfig {
        &self.config
    }

    /// Seeds the in-memory cache from persisted state without touching the
    /// request budget.
    pub fn preload(
        &self,
        scores: impl IntoIterator<Item = BotScore>,
        unscorable: impl IntoIterator<Item = String>,
    ) {
        let mut cache = self.cache.write().unwrap();
        for s in scores {
            cache.insert(s.account_id.clone(), s);
        }
        self.unscorable.write().unwrap().extend(unscorable);
    }

    fn cached_fresh(&self, account_id: &str) -> Option<BotScore> {
        let cache = self.cache.read().unwrap();
        let hit = cache.get(account_id)?;
        let age = self.clock.now().signed_duration_since(hit.fetched_at);
        let fresh = age.to_std().map(|a| a < self.config.cache_ttl).unwrap_or(true);
        fresh.then(|| BotScore { source: ScoreSource::Cache, ..hit.clone() })
    }

    fn enqueue(&self, account_id: &str) {
        self.pending.lock().unwrap().push(account_id);
    }

    fn persist(&self, f: impl FnOnce(&dyn ScorePersistence) -> Result<(), PersistError>) {
        if let Some(p) = &self.persistence {
            if let Err(err) = f(p.as_ref()) {
                tracing::warn!(%err, "failed to persist score cache entry");
            }
        }
    }

    pub fn get_score(&self, account_id: &str) -> Result<ScoreOutcome, ScoringError> {
        if account_id.is_empty() {
            return Err(ScoringError::EmptyAccountId);
        }
        if self.unscorable.read().unwrap().contains(account_id) {
            return Ok(ScoreOutcome::Unscorable);
        }
        if let Some(hit) = self.cached_fresh(account_id) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(ScoreOutcome::Resolved(hit));
        }
        let now = self.clock.now();
        if !self.budget.try_acquire(now.date_naive()) {
            self.enqueue(account_id);
            return Ok(ScoreOutcome::Pending);
        }
        self.requests.fetch_add(1, Ordering::Relaxed);
        let result = self.backend.fetch(account_id).and_then(|s| {
            if (MIN_SCORE..=MAX_SCORE).contains(&s) {
                Ok(s)
            } else {
                Err(FetchError::Unavailable(format!("score {s} out of range")))
            }
        });
        match result {
            Ok(score) => {
                let bot_score = BotScore {
                    account_id: account_id.to_string(),
                    score,
                    fetched_at: now,
                    source: self.backend.source(),
                };
                self.cache.write().unwrap().insert(account_id.to_string(), bot_score.clone());
                self.pending.lock().unwrap().remove(account_id);
                self.persist(|p| p.save_score(&bot_score));
                Ok(ScoreOutcome::Resolved(bot_score))
            }
            Err(FetchError::Unscorable { status }) => {
                tracing::debug!(account_id, status, "account is unscorable");
                self.unscorable.write().unwrap().insert(account_id.to_string());
                self.cache.write().unwrap().remove(account_id);
                self.pending.lock().unwrap().remove(account_id);
                self.persist(|p| p.save_unscorable(account_id));
                Ok(ScoreOutcome::Unscorable)
            }
            Err(FetchError::Unavailable(reason)) => {
                tracing::debug!(account_id, %reason, "score fetch failed; queued");
                self.failures.fetch_add(1, Ordering::Relaxed);
                self.enqueue(account_id);
                Ok(ScoreOutcome::Pending)
            }
        }
    }

    /// Retries every queued account once. Accounts that still cannot be
    /// fetched go back on the queue.
    pub fn refresh_pending(&self) -> RefreshReport {
        let queued = self.pending.lock().unwrap().drain();
        let mut report = RefreshReport::default();
        for id in queued {
            match self.get_score(&id) {
                Ok(ScoreOutcome::Resolved(_)) => report.resolved += 1,
                Ok(ScoreOutcome::Unscorable) => report.unscorable += 1,
                Ok(ScoreOutcome::Pending) | Err(_) => report.still_pending += 1,
            }
        }
        report
    }

    pub fn pending_len(&self) -> usize {
        self.pending.lock().unwrap().order.len()
    }

    pub fn remaining_requests(&self) -> u32 {
        self.budget.remaining(self.clock.now().date_naive())
    }

    pub fn stats(&self) -> ScorerStats {
        ScorerStats {
            requests: self.requests.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
            failures: self.failures.load(Ordering::Relaxed),
            cached: self.cache.read().unwrap().len(),
            pending: self.pending_len(),
            unscorable: self.unscorable.read().unwrap().len(),
        }
    }

    /// Every known score, including entries past their TTL: a stale score is
    /// still the best estimate until a refresh replaces it.
    pub fn score_table(&self) -> ScoreTable {
        let mut table: ScoreTable = self
            .cache
            .read()
            .unwrap()
            .values()
            .map(|s| (s.account_id.clone(), s.score))
            .collect();
        for id in self.unscorable.read().unwrap().iter() {
            table.mark_unscorable(id.clone());
        }
        table
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{ManualClock, MockBackend};
    use chrono::{TimeZone, Utc};
    use std::time::Duration;

    fn clock() -> Arc<ManualClock> {
        Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2018, 10, 22, 12, 0, 0).unwrap()))
    }

    fn mock(scores: &[(&str, f64)]) -> Arc<MockBackend> {
        let m = MockBackend::new();
        for (id, s) in scores {
            m.register(*id, *s);
        }
        Arc::new(m)
    }

    #[test]
    fn mock_returns_ground_truth() {
        let backend = mock(&[("a", 4.5)]);
        let scorer = Scorer::new(ScorerConfig::default(), backend).unwrap();
        match scorer.get_score("a").unwrap() {
            ScoreOutcome::Resolved(s) => {
                assert_eq!(s.score, 4.5);
                assert_eq!(s.source, ScoreSource::Mock);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cache_hit_issues_no_request() {
        let backend = mock(&[("a", 2.25)]);
        let clock = clock();
        let scorer = Scorer::new(ScorerConfig::default(), backend.clone()).unwrap().with_clock(clock.clone());
        let ScoreOutcome::Resolved(first) = scorer.get_score("a").unwrap() else { panic!() };
        clock.advance(chrono::Duration::days(6));
        let ScoreOutcome::Resolved(second) = scorer.get_score("a").unwrap() else { panic!() };
        assert_eq!(backend.requests(), 1);
        assert_eq!(second.source, ScoreSource::Cache);
        assert_eq!(second.score.to_bits(), first.score.to_bits());
        assert_eq!(second.fetched_at, first.fetched_at);
    }

    #[test]
    fn expired_entry_is_refetched() {
        let backend = mock(&[("a", 1.0)]);
        let clock = clock();
        let cfg = ScorerConfig { cache_ttl: Duration::from_secs(3600), ..Default::default() };
        let scorer = Scorer::new(cfg, backend.clone()).unwrap().with_clock(clock.clone());
        scorer.get_score("a").unwrap();
        clock.advance(chrono::Duration::hours(2));
        scorer.get_score("a").unwrap();
        assert_eq!(backend.requests(), 2);
    }

    #[test]
    fn exhausted_quota_goes_pending() {
        let backend = mock(&[("a", 1.0), ("b", 2.0)]);
        let clock = clock();
        let cfg = ScorerConfig { max_requests_per_day: 1, ..Default::default() };
        let scorer = Scorer::new(cfg, backend.clone()).unwrap().with_clock(clock.clone());
        assert!(matches!(scorer.get_score("a").unwrap(), ScoreOutcome::Resolved(_)));
        assert_eq!(scorer.remaining_requests(), 0);
        let before = scorer.pending_len();
        assert_eq!(scorer.get_score("b").unwrap(), ScoreOutcome::Pending);
        assert_eq!(scorer.pending_len(), before + 1);
        assert_eq!(backend.requests(), 1);

        // Next UTC day the budget resets and the refresh cycle resolves b.
        clock.advance(chrono::Duration::days(1));
        let report = scorer.refresh_pending();
        assert_eq!(report, RefreshReport { resolved: 1, still_pending: 0, unscorable: 0 });
        assert_eq!(scorer.pending_len(), 0);
    }

    #[test]
    fn unknown_account_is_unscorable_and_never_retried() {
        let backend = mock(&[]);
        let scorer = Scorer::new(ScorerConfig::default(), backend.clone()).unwrap();
        assert_eq!(scorer.get_score("ghost").unwrap(), ScoreOutcome::Unscorable);
        assert_eq!(scorer.get_score("ghost").unwrap(), ScoreOutcome::Unscorable);
        assert_eq!(backend.requests(), 1);
        assert_eq!(scorer.pending_len(), 0);
        assert_eq!(scorer.stats().unscorable, 1);
    }

    #[test]
    fn empty_account_id_is_rejected() {
        let scorer = Scorer::new(ScorerConfig::default(), mock(&[])).unwrap();
        assert_eq!(scorer.get_score(""), Err(ScoringError::EmptyAccountId));
    }

    #[test]
    fn budget_never_exceeded_across_threads() {
        let budget = Arc::new(RequestBudget::new(1000));
        let day = NaiveDate::from_ymd_opt(2018, 11, 6).unwrap();
        let granted: u32 = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|_| {
                    let b = budget.clone();
                    s.spawn(move || (0..500).filter(|_| b.try_acquire(day)).count() as u32)
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).sum()
        });
        assert_eq!(granted, 1000);
        assert!(budget.try_acquire(day.succ_opt().unwrap()));
    }

    #[test]
    fn pending_queue_deduplicates() {
        let mut q = PendingQueue::default();
        q.push("a");
        q.push("a");
        q.push("b");
        assert_eq!(q.order.len(), 2);
        q.remove("a");
        assert_eq!(q.drain(), vec!["b".to_string()]);
    }
}
