//! Account bot scores: the service client contract, a persistent cache with a
//! daily request quota, and the bot/human rule.

mod backend;
mod clock;
mod scorer;

use std::collections::{HashMap, HashSet};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use backend::{FetchError, HttpBackend, MockBackend, ScoreBackend};
pub use clock::{Clock, ManualClock, SystemClock};
pub use scorer::{PersistError, RefreshReport, RequestBudget, ScoreOutcome, ScorePersistence, Scorer, ScorerStats};

pub const MIN_SCORE: f64 = 0.0;
pub const MAX_SCORE: f64 = 5.0;
pub const DEFAULT_BOT_THRESHOLD: f64 = 4.0;
pub const DEFAULT_CACHE_TTL: Duration = Duration::from_secs(7 * 24 * 3600);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    Service,
    Cache,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotScore {
    pub account_id: String,
    pub score: f64,
    pub fetched_at: DateTime<Utc>,
    pub source: ScoreSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerConfig {
    /// Base URL of the scoring service; empty selects the mock scorer.
    pub endpoint: String,
    pub cache_ttl: Duration,
    pub max_requests_per_day: u32,
    pub bot_threshold: f64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            cache_ttl: DEFAULT_CACHE_TTL,
            max_requests_per_day: 100_000,
            bot_threshold: DEFAULT_BOT_THRESHOLD,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScoringError {
    #[error("invalid scorer config: {0}")]
    InvalidConfig(&'static str),
    #[error("account id is empty")]
    EmptyAccountId,
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<(), ScoringError> {
        if !(self.bot_threshold > MIN_SCORE && self.bot_threshold < MAX_SCORE) {
            return Err(ScoringError::InvalidConfig("bot_threshold must lie strictly between 0 and 5"));
        }
        if self.cache_ttl.is_zero() {
            return Err(ScoringError::InvalidConfig("cache_ttl must be positive"));
        }
        if self.max_requests_per_day == 0 {
            return Err(ScoringError::InvalidConfig("max_requests_per_day must be positive"));
        }
        Ok(())
    }
}

/// Bot iff the score is strictly above the threshold.
pub fn is_bot(score: &BotScore, config: &ScorerConfig) -> bool {
    exceeds_threshold(score.score, config.bot_threshold)
}

#[inline]
pub fn exceeds_threshold(score: f64, threshold: f64) -> bool {
    score > threshold
}

/// What is known about an account's score at aggregation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreState {
    Resolved(f64),
    Pending,
    Unscorable,
}

/// Point-in-time view of every resolved score, used by aggregation.
/// Accounts that are neither resolved nor unscorable are pending.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    resolved: HashMap<String, f64>,
    unscorable: HashSet<String>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, account_id: impl Into<String>, score: f64) {
        self.resolved.insert(account_id.into(), score);
    }

    pub fn mark_unscorable(&mut self, account_id: impl Into<String>) {
        let id = account_id.into();
        self.resolved.remove(&id);
        self.unscorable.insert(id);
    }

    pub fn lookup(&self, account_id: &str) -> ScoreState {
        if let Some(&s) = self.resolved.get(account_id) {
            ScoreState::Resolved(s)
        } else if self.unscorable.contains(account_id) {
            ScoreState::Unscorable
        } else {
            ScoreState::Pending
        }
    }

    pub fn resolved_len(&self) -> usize {
        self.resolved.len()
    }

    pub fn unscorable_len(&self) -> usize {
        self.unscorable.len()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for ScoreTable {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        let mut t = Self::new();
        for (id, s) in iter {
            t.insert(id, s);
        }
        t
    }
}
