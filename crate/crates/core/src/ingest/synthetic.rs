//! Seeded synthetic tweet populations.
//!
//! Each account tweets at a fixed hourly rate. Electoral tweets come from
//! participating accounts only, with an exact per-hour count (fractional
//! rates are carried between hours). The baseline stream draws exactly
//! `rate_limit_random` tweets per hour from the whole population, authors
//! chosen in proportion to their rates. Ground-truth scores ride along for
//! the mock scorer.

use std::collections::{BTreeMap, HashSet};
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::archive::write_archive;
use super::tweet::{StreamKind, Tweet};
use crate::scoring::{MAX_SCORE, MIN_SCORE};

fn participates_by_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountSpec {
    pub account_id: String,
    #[serde(default)]
    pub handle: Option<String>,
    pub true_score: f64,
    pub tweets_per_hour: f64,
    /// Vocabulary the account draws its hashtags from.
    #[serde(default)]
    pub hashtags: Vec<String>,
    /// Whether the account posts to the electoral stream.
    #[serde(default = "participates_by_default")]
    pub electoral: bool,
    #[serde(default)]
    pub mentions: Vec<String>,
    #[serde(default)]
    pub links: Vec<String>,
}

impl AccountSpec {
    pub fn new(account_id: impl Into<String>, true_score: f64, tweets_per_hour: f64) -> Self {
        Self {
            account_id: account_id.into(),
            handle: None,
            true_score,
            tweets_per_hour,
            hashtags: Vec::new(),
            electoral: true,
            mentions: Vec::new(),
            links: Vec::new(),
        }
    }

    pub fn with_hashtags<S: Into<String>>(mut self, tags: impl IntoIterator<Item = S>) -> Self {
        self.hashtags = tags.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_mentions<S: Into<String>>(mut self, m: impl IntoIterator<Item = S>) -> Self {
        self.mentions = m.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_links<S: Into<String>>(mut self, l: impl IntoIterator<Item = S>) -> Self {
        self.links = l.into_iter().map(Into::into).collect();
        self
    }

    pub fn electoral(mut self, participates: bool) -> Self {
        self.electoral = participates;
        self
    }

    fn handle(&self) -> String {
        self.handle
            .clone()
            .unwrap_or_else(|| format!("user_{}", self.account_id))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub population: Vec<AccountSpec>,
    pub hours: u32,
    pub seed: u64,
    pub start: DateTime<Utc>,
    pub rate_limit_random: u32,
}

impl SyntheticSpec {
    pub fn new(population: Vec<AccountSpec>, hours: u32, seed: u64) -> Self {
        Self {
            population,
            hours,
            seed,
            start: default_start(),
            rate_limit_random: super::DEFAULT_RATE_LIMIT_RANDOM,
        }
    }

    pub fn starting_at(mut self, start: DateTime<Utc>) -> Self {
        self.start = start;
        self
    }

    pub fn with_rate_limit_random(mut self, per_hour: u32) -> Self {
        self.rate_limit_random = per_hour;
        self
    }
}

/// 2018-10-22T00:00:00Z, the first day of the midterm monitoring window.
pub fn default_start() -> DateTime<Utc> {
    DateTime::from_timestamp(1_540_166_400, 0).expect("valid timestamp")
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SyntheticError {
    #[error("account `{account}` has non-positive tweet rate {rate}")]
    InvalidRate { account: String, rate: f64 },
    #[error("account `{account}` has score {score} outside [0, 5]")]
    ScoreOutOfRange { account: String, score: f64 },
    #[error("account id `{0}` appears more than once")]
    DuplicateAccount(String),
    #[error("rate_limit_random must be positive")]
    ZeroRateLimit,
}

#[derive(Debug, Clone, Default)]
pub struct SyntheticArchive {
    pub electoral: Vec<Tweet>,
    pub baseline: Vec<Tweet>,
    pub true_scores: BTreeMap<String, f64>,
}

impl SyntheticArchive {
    pub fn stream(&self, kind: StreamKind) -> &[Tweet] {
        match kind {
            StreamKind::Electoral => &self.electoral,
            StreamKind::RandomSample => &self.baseline,
        }
    }

    pub fn archive_path(dir: &Path, kind: StreamKind) -> PathBuf {
        dir.join(format!("{}.ndjson", kind.as_str()))
    }

    /// Writes `electoral.ndjson` and `random_sample.ndjson` into `dir`, each
    /// record carrying its author's `true_score`.
    pub fn write_to_dir(&self, dir: &Path) -> io::Result<[PathBuf; 2]> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(2);
        for kind in StreamKind::ALL {
            let path = Self::archive_path(dir, kind);
            write_archive(
                &path,
                self.stream(kind)
                    .iter()
                    .map(|t| (t, self.true_scores.get(t.author_id()).copied())),
            )?;
            paths.push(path);
        }
        Ok([paths[0].clone(), paths[1].clone()])
    }
}

fn validate(spec: &SyntheticSpec) -> Result<(), SyntheticError> {
    if spec.rate_limit_random == 0 {
        return Err(SyntheticError::ZeroRateLimit);
    }
    let mut seen = HashSet::new();
    for a in &spec.population {
        if !a.tweets_per_hour.is_finite() || a.tweets_per_hour <= 0.0 {
            return Err(SyntheticError::InvalidRate {
                account: a.account_id.clone(),
                rate: a.tweets_per_hour,
            });
        }
        if !(MIN_SCORE..=MAX_SCORE).contains(&a.true_score) {
            return Err(SyntheticError::ScoreOutOfRange {
                account: a.account_id.clone(),
                score: a.true_score,
            });
        }
        if !seen.insert(a.account_id.as_str()) {
            return Err(SyntheticError::DuplicateAccount(a.account_id.clone()));
        }
    }
    Ok(())
}

/// Tweets an account with `rate` per hour emits in hour `h`, carrying the
/// fractional remainder forward so that the total over `H` hours is
/// `floor(H * rate)`.
fn tweets_in_hour(rate: f64, h: u32) -> u64 {
    let cum = |x: f64| (x * rate + 1e-9).floor() as u64;
    cum(f64::from(h) + 1.0) - cum(f64::from(h))
}

struct Emitter {
    rng: ChaCha8Rng,
    prefix: String,
    next_id: u64,
    stream: StreamKind,
}

impl Emitter {
    fn emit(&mut self, account: &AccountSpec, hour_start: DateTime<Utc>) -> Tweet {
        let rng = &mut self.rng;
        let offset = rng.gen_range(0..3600);
        let mut tags: Vec<&str> = Vec::new();
        if !account.hashtags.is_empty() {
            let n = if account.hashtags.len() > 1 && rng.gen_bool(0.5) { 2 } else { 1 };
            tags = account
                .hashtags
                .choose_multiple(rng, n)
                .map(String::as_str)
                .collect();
        }
        let mention = if !account.mentions.is_empty() && rng.gen_bool(0.5) {
            account.mentions.choose(rng).map(String::as_str)
        } else {
            None
        };
        let link = if !account.links.is_empty() && rng.gen_bool(0.5) {
            account.links.choose(rng).map(String::as_str)
        } else {
            None
        };
        let is_retweet = rng.gen_bool(0.3);

        let mut text = String::new();
        if is_retweet {
            text.push_str("RT ");
        }
        for t in &tags {
            text.push('#');
            text.push_str(t);
            text.push(' ');
        }
        if let Some(m) = mention {
            text.push('@');
            text.push_str(m);
            text.push(' ');
        }
        if let Some(l) = link {
            text.push_str(l);
        }

        let id = format!("{}{:09}", self.prefix, self.next_id);
        self.next_id += 1;
        Tweet::new(id, account.account_id.as_str(), hour_start + Duration::seconds(offset), self.stream)
            .with_handle(account.handle())
            .with_text(text.trim_end())
            .with_hashtags(tags)
            .with_mentions(mention)
            .with_links(link)
            .retweet(is_retweet)
    }
}

/// Generates both streams for `spec.hours` hours starting at `spec.start`.
/// Identical specs produce identical archives.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticArchive, SyntheticError> {
    validate(spec)?;
    let mut root = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut electoral = Emitter {
        rng: ChaCha8Rng::seed_from_u64(root.gen()),
        prefix: format!("s{}e", spec.seed),
        next_id: 0,
        stream: StreamKind::Electoral,
    };
    let mut baseline = Emitter {
        rng: ChaCha8Rng::seed_from_u64(root.gen()),
        prefix: format!("s{}r", spec.seed),
        next_id: 0,
        stream: StreamKind::RandomSample,
    };
    let mut author_rng = ChaCha8Rng::seed_from_u64(root.gen());
    let weights = if spec.population.is_empty() {
        None
    } else {
        Some(
            WeightedIndex::new(spec.population.iter().map(|a| a.tweets_per_hour))
                .expect("rates validated positive"),
        )
    };

    let mut out = SyntheticArchive {
        true_scores: spec
            .population
            .iter()
            .map(|a| (a.account_id.clone(), a.true_score))
            .collect(),
        ..Default::default()
    };

    for h in 0..spec.hours {
        let hour_start = spec.start + Duration::hours(i64::from(h));
        for account in spec.population.iter().filter(|a| a.electoral) {
            for _ in 0..tweets_in_hour(account.tweets_per_hour, h) {
                out.electoral.push(electoral.emit(account, hour_start));
            }
        }
        if let Some(weights) = &weights {
            for _ in 0..spec.rate_limit_random {
                let account = &spec.population[weights.sample(&mut author_rng)];
                out.baseline.push(baseline.emit(account, hour_start));
            }
        }
    }
    out.electoral.sort_by_key(Tweet::created_at);
    out.baseline.sort_by_key(Tweet::created_at);
    Ok(out)
}
