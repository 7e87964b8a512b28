//! Tweet sources for the electoral and baseline streams.
//!
//! Every source implements the same contract: an iterator of [`Tweet`]s in
//! nondecreasing `created_at` order plus [`SessionStats`]. Electoral sources
//! only yield tweets that carry a tracked hashtag; baseline sources are
//! thinned to `rate_limit_random` tweets per UTC hour, keeping the earliest.

pub mod archive;
pub mod synthetic;
mod tweet;

use std::collections::HashMap;
use std::path::PathBuf;

use chrono::{DateTime, Utc};

pub use archive::{read_archive, write_archive, ArchiveRecord, RecordError};
pub use synthetic::{generate_synthetic, AccountSpec, SyntheticArchive, SyntheticError, SyntheticSpec};
pub use tweet::{lowercase_scheme_and_host, normalize_hashtag, normalize_mention, StreamKind, Tweet};

use crate::expansion::HashtagSet;

/// Baseline sampling rate of the random stream, tweets per hour.
pub const DEFAULT_RATE_LIMIT_RANDOM: u32 = 1000;

#[derive(Debug, Clone)]
pub enum SourceKind {
    Replay {
        path: PathBuf,
    },
    Synthetic {
        seed: u64,
        population: Vec<AccountSpec>,
        hours: u32,
        start: DateTime<Utc>,
    },
    LiveStub,
}

#[derive(Debug, Clone)]
pub struct SourceConfig {
    pub kind: SourceKind,
    pub stream: StreamKind,
    pub rate_limit_random: u32,
    /// Required for electoral sources.
    pub track: Option<HashtagSet>,
}

impl SourceConfig {
    pub fn replay(path: impl Into<PathBuf>, stream: StreamKind) -> Self {
        Self {
            kind: SourceKind::Replay { path: path.into() },
            stream,
            rate_limit_random: DEFAULT_RATE_LIMIT_RANDOM,
            track: None,
        }
    }

    pub fn synthetic(spec: &SyntheticSpec, stream: StreamKind) -> Self {
        Self {
            kind: SourceKind::Synthetic {
                seed: spec.seed,
                population: spec.population.clone(),
                hours: spec.hours,
                start: spec.start,
            },
            stream,
            rate_limit_random: spec.rate_limit_random,
            track: None,
        }
    }

    pub fn live_stub(stream: StreamKind) -> Self {
        Self {
            kind: SourceKind::LiveStub,
            stream,
            rate_limit_random: DEFAULT_RATE_LIMIT_RANDOM,
            track: None,
        }
    }

    pub fn with_track(mut self, track: HashtagSet) -> Self {
        self.track = Some(track);
        self
    }

    pub fn with_rate_limit_random(mut self, per_hour: u32) -> Self {
        self.rate_limit_random = per_hour;
        self
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        if self.rate_limit_random == 0 {
            return Err(SourceError::InvalidConfig("rate_limit_random must be positive".into()));
        }
        if self.stream == StreamKind::Electoral
            && self.track.is_none()
            && !matches!(self.kind, SourceKind::LiveStub)
        {
            return Err(SourceError::InvalidConfig("electoral sources need a hashtag track".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error("invalid source config: {0}")]
    InvalidConfig(String),
    #[error("cannot open archive {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceStatus {
    Ready,
    /// The live adapter has no platform credentials wired in.
    Unconfigured,
}

/// Per-session counters. For a replay source,
/// `lines = accepted + skipped_malformed + filtered_untracked + thinned`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub lines: u64,
    pub accepted: u64,
    pub skipped_malformed: u64,
    pub filtered_untracked: u64,
    pub thinned: u64,
}

/// A single-consumer stream handle.
#[derive(Debug)]
pub struct TweetSource {
    stream: StreamKind,
    status: SourceStatus,
    stats: SessionStats,
    ground_truth: HashMap<String, f64>,
    tweets: std::vec::IntoIter<Tweet>,
}

impl TweetSource {
    pub fn stream(&self) -> StreamKind {
        self.stream
    }

    pub fn status(&self) -> SourceStatus {
        self.status
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    /// Fixture scores (`true_score`) seen in the source, keyed by account.
    pub fn ground_truth(&self) -> &HashMap<String, f64> {
        &self.ground_truth
    }
}

impl Iterator for TweetSource {
    type Item = Tweet;

    fn next(&mut self) -> Option<Tweet> {
        self.tweets.next()
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.tweets.size_hint()
    }
}

/// True iff any of the tweet's hashtags is tracked.
pub fn matches_track(tweet: &Tweet, track: &HashtagSet) -> bool {
    tweet.hashtags().iter().any(|t| track.contains(t))
}

/// Keeps the first `per_hour` tweets of every UTC hour. Input must already be
/// sorted by time.
fn thin_per_hour(tweets: Vec<Tweet>, per_hour: u32) -> (Vec<Tweet>, u64) {
    let mut kept = Vec::with_capacity(tweets.len());
    let mut dropped = 0;
    let mut current_hour = i64::MIN;
    let mut in_hour = 0u32;
    for t in tweets {
        let hour = t.created_at().timestamp().div_euclid(3600);
        if hour != current_hour {
            current_hour = hour;
            in_hour = 0;
        }
        if in_hour < per_hour {
            in_hour += 1;
            kept.push(t);
        } else {
            dropped += 1;
        }
    }
    (kept, dropped)
}

pub fn open_source(config: &SourceConfig) -> Result<TweetSource, SourceError> {
    config.validate()?;
    let mut stats = SessionStats::default();
    let mut ground_truth = HashMap::new();

    let mut tweets = match &config.kind {
        SourceKind::LiveStub => {
            tracing::warn!(stream = %config.stream, "live source is unconfigured; yielding nothing");
            return Ok(TweetSource {
                stream: config.stream,
                status: SourceStatus::Unconfigured,
                stats,
                ground_truth,
                tweets: Vec::new().into_iter(),
            });
        }
        SourceKind::Replay { path } => {
            let contents = read_archive(path, config.stream).map_err(|source| SourceError::Open {
                path: path.clone(),
                source,
            })?;
            stats.lines = contents.lines;
            stats.skipped_malformed = contents.skipped;
            let mut tweets = Vec::with_capacity(contents.records.len());
            for (tweet, truth) in contents.records {
                if let Some(score) = truth {
                    ground_truth.insert(tweet.author_id().to_string(), score);
                }
                tweets.push(tweet);
            }
            tweets
        }
        SourceKind::Synthetic { seed, population, hours, start } => {
            let spec = SyntheticSpec {
                population: population.clone(),
                hours: *hours,
                seed: *seed,
                start: *start,
                rate_limit_random: config.rate_limit_random,
            };
            let archive = generate_synthetic(&spec)?;
            let tweets = match config.stream {
                StreamKind::Electoral => archive.electoral,
                StreamKind::RandomSample => archive.baseline,
            };
            stats.lines = tweets.len() as u64;
            ground_truth.extend(archive.true_scores);
            tweets
        }
    };

    // Stable, so equal timestamps keep archive order.
    tweets.sort_by_key(Tweet::created_at);

    if let Some(track) = config.track.as_ref().filter(|_| config.stream == StreamKind::Electoral) {
        let before = tweets.len();
        tweets.retain(|t| matches_track(t, track));
        stats.filtered_untracked = (before - tweets.len()) as u64;
    }
    if config.stream == StreamKind::RandomSample {
        let (kept, dropped) = thin_per_hour(tweets, config.rate_limit_random);
        tweets = kept;
        stats.thinned = dropped;
    }
    stats.accepted = tweets.len() as u64;

    Ok(TweetSource {
        stream: config.stream,
        status: SourceStatus::Ready,
        stats,
        ground_truth,
        tweets: tweets.into_iter(),
    })
}
