//! Daily score summaries and the Bot Electioneering Volume index family.
//!
//! The daily score of a stream is the mean over its tweets of the author's
//! bot score, i.e. account scores weighted by how often each account tweeted
//! that day. The index is the relative difference between the electoral and
//! baseline summaries: `(S_e - S_r) / S_r`. Three summaries are supported:
//! mean (the deployed index), median, and the proportion of tweets by
//! bot-classified accounts.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::ingest::{StreamKind, Tweet};
use crate::scoring::{exceeds_threshold, ScoreState, ScoreTable};

/// Default timeline length in days.
pub const DEFAULT_TIMELINE_DAYS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyAggregate {
    pub date: NaiveDate,
    pub stream: StreamKind,
    /// Tweets whose author score is resolved.
    pub tweet_count: u64,
    pub unique_accounts: u64,
    pub mean_score: f64,
    pub median_score: f64,
    pub bot_tweet_proportion: f64,
    pub pending_count: u64,
    pub unscorable_count: u64,
    /// No scored tweets; the score fields are placeholders.
    pub empty: bool,
}

impl DailyAggregate {
    pub fn empty(date: NaiveDate, stream: StreamKind) -> Self {
        Self {
            date,
            stream,
            tweet_count: 0,
            unique_accounts: 0,
            mean_score: 0.0,
            median_score: 0.0,
            bot_tweet_proportion: 0.0,
            pending_count: 0,
            unscorable_count: 0,
            empty: true,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("tweet {tweet_id} belongs to {found_date}/{found_stream}, expected {date}/{stream}")]
    MixedDay {
        tweet_id: String,
        date: NaiveDate,
        stream: StreamKind,
        found_date: NaiveDate,
        found_stream: StreamKind,
    },
    #[error("aggregates are for different days ({0} vs {1})")]
    DateMismatch(NaiveDate, NaiveDate),
    #[error("invalid date range: {0}")]
    InvalidRange(String),
}

/// Median of an ascending slice; mean of the two central values for even
/// lengths.
fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Summarizes one stream-day. Every tweet must fall on `date` (UTC) and
/// belong to `stream`. Tweets by pending or unscorable authors are counted
/// separately and excluded from every score field.
pub fn aggregate_day<'a>(
    date: NaiveDate,
    stream: StreamKind,
    tweets: impl IntoIterator<Item = &'a Tweet>,
    scores: &ScoreTable,
    bot_threshold: f64,
) -> Result<DailyAggregate, MetricsError> {
    let mut per_tweet = Vec::new();
    let mut accounts = HashSet::new();
    let mut agg = DailyAggregate::empty(date, stream);

    for t in tweets {
        if t.date() != date || t.stream() != stream {
            return Err(MetricsError::MixedDay {
                tweet_id: t.tweet_id().to_string(),
                date,
                stream,
                found_date: t.date(),
                found_stream: t.stream(),
            });
        }
        match scores.lookup(t.author_id()) {
            ScoreState::Resolved(s) => {
                per_tweet.push(s);
                accounts.insert(t.author_id());
            }
            ScoreState::Pending => agg.pending_count += 1,
            ScoreState::Unscorable => agg.unscorable_count += 1,
        }
    }
    if per_tweet.is_empty() {
        return Ok(agg);
    }

    // Summing in sorted order makes the mean independent of input order.
    per_tweet.sort_by(f64::total_cmp);
    let n = per_tweet.len();
    let bots = per_tweet.iter().filter(|&&s| exceeds_threshold(s, bot_threshold)).count();
    agg.tweet_count = n as u64;
    agg.unique_accounts = accounts.len() as u64;
    agg.mean_score = per_tweet.iter().sum::<f64>() / n as f64;
    agg.median_score = median_sorted(&per_tweet);
    agg.bot_tweet_proportion = bots as f64 / n as f64;
    agg.empty = false;
    Ok(agg)
}

/// `(electoral - baseline) / baseline`, or `None` when the baseline is zero.
pub fn relative_difference(electoral: f64, baseline: f64) -> Option<f64> {
    if baseline == 0.0 {
        return None;
    }
    let v = (electoral - baseline) / baseline;
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefinedFlags {
    pub bev: bool,
    pub bev_median: bool,
    pub bev2: bool,
}

/// One timeline point. An undefined variant is `None` and renders as a gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevPoint {
    pub date: NaiveDate,
    pub bev: Option<f64>,
    pub bev_median: Option<f64>,
    pub bev2: Option<f64>,
    pub defined: DefinedFlags,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevValues {
    pub bev: Option<f64>,
    pub bev_median: Option<f64>,
}

fn same_day(e: &DailyAggregate, r: &DailyAggregate) -> Result<(), MetricsError> {
    if e.date != r.date {
        return Err(MetricsError::DateMismatch(e.date, r.date));
    }
    Ok(())
}

/// Mean- and median-based index for one day.
pub fn bev(electoral: &DailyAggregate, baseline: &DailyAggregate) -> Result<BevValues, MetricsError> {
    same_day(electoral, baseline)?;
    if electoral.empty || baseline.empty {
        return Ok(BevValues { bev: None, bev_median: None });
    }
    Ok(BevValues {
        bev: relative_difference(electoral.mean_score, baseline.mean_score),
        bev_median: relative_difference(electoral.median_score, baseline.median_score),
    })
}

/// Proportion-based index for one day.
pub fn bev2(electoral: &DailyAggregate, baseline: &DailyAggregate) -> Result<Option<f64>, MetricsError> {
    same_day(electoral, baseline)?;
    if electoral.empty || baseline.empty {
        return Ok(None);
    }
    Ok(relative_difference(electoral.bot_tweet_proportion, baseline.bot_tweet_proportion))
}

pub fn bev_point(electoral: &DailyAggregate, baseline: &DailyAggregate) -> Result<BevPoint, MetricsError> {
    let BevValues { bev, bev_median } = bev(electoral, baseline)?;
    let bev2 = bev2(electoral, baseline)?;
    Ok(BevPoint {
        date: electoral.date,
        bev,
        bev_median,
        bev2,
        defined: DefinedFlags { bev: bev.is_some(), bev_median: bev_median.is_some(), bev2: bev2.is_some() },
    })
}

/// Renders an index value as a signed percentage with one decimal, or `n/a`.
pub fn format_percentage(value: Option<f64>) -> String {
    match value {
        None => "n/a".to_string(),
        Some(v) => {
            let pct = (v * 1000.0).round() / 10.0;
            // Avoid "-0.0%".
            let pct = if pct == 0.0 { 0.0 } else { pct };
            format!("{pct:+.1}%")
        }
    }
}

/// Inclusive range of UTC dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, MetricsError> {
        if end < start {
            return Err(MetricsError::InvalidRange(format!("{start}..{end} is empty")));
        }
        Ok(Self { start, end })
    }

    /// The `days` dates ending at `end`.
    pub fn trailing(end: NaiveDate, days: u32) -> Result<Self, MetricsError> {
        if days == 0 {
            return Err(MetricsError::InvalidRange("window must cover at least one day".into()));
        }
        Self::new(end - Duration::days(i64::from(days) - 1), end)
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn len(&self) -> usize {
        ((self.end - self.start).num_days() + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> {
        let end = self.end;
        self.start.iter_days().take_while(move |d| *d <= end)
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

impl FromStr for DateRange {
    type Err = MetricsError;

    /// `YYYY-MM-DD..YYYY-MM-DD`, or a single date.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |x: &str| {
            x.trim()
                .parse::<NaiveDate>()
                .map_err(|e| MetricsError::InvalidRange(format!("`{x}`: {e}")))
        };
        match s.split_once("..") {
            Some((a, b)) => Self::new(parse(a)?, parse(b)?),
            None => {
                let d = parse(s)?;
                Self::new(d, d)
            }
        }
    }
}

pub type AggregateMap = BTreeMap<(NaiveDate, StreamKind), DailyAggregate>;

/// One point per date in `range`, in date order. Missing aggregates count as
/// empty days, which leaves every variant undefined.
pub fn build_timeline(range: DateRange, aggregates: &AggregateMap) -> Vec<BevPoint> {
    range
        .dates()
        .map(|date| {
            let get = |stream| {
                aggregates
                    .get(&(date, stream))
                    .cloned()
                    .unwrap_or_else(|| DailyAggregate::empty(date, stream))
            };
            bev_point(&get(StreamKind::Electoral), &get(StreamKind::RandomSample))
                .expect("both aggregates share the date")
        })
        .collect()
}
