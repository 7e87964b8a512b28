use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::entities::{extract_bot_entities, tag_cloud, EntityCount, TagCloudEntry, DEFAULT_TAG_CLOUD_SIZE};
use crate::ingest::{StreamKind, Tweet};
use crate::metrics::{aggregate_day, bev_point, build_timeline, AggregateMap, BevPoint, DailyAggregate, DateRange};
use crate::par::Execution;
use crate::scoring::ScoreTable;

/// Everything published for one UTC day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySnapshot {
    pub electoral: DailyAggregate,
    pub baseline: DailyAggregate,
    pub bev: BevPoint,
    /// Bot entity counts, grouped by kind and ranked within each kind.
    pub entities: Vec<EntityCount>,
    pub tag_cloud: Vec<TagCloudEntry>,
}

impl DaySnapshot {
    pub fn has_data(&self) -> bool {
        let touched = |a: &DailyAggregate| a.tweet_count + a.pending_count + a.unscorable_count > 0;
        touched(&self.electoral) || touched(&self.baseline)
    }
}

/// An immutable, atomically published recomputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub snapshot_id: u64,
    pub built_at: DateTime<Utc>,
    pub as_of: DateTime<Utc>,
    pub days: BTreeMap<NaiveDate, DaySnapshot>,
}

impl Snapshot {
    pub fn latest_date(&self) -> Option<NaiveDate> {
        self.days.keys().next_back().copied()
    }

    pub fn aggregates(&self) -> AggregateMap {
        let mut map = AggregateMap::new();
        for (date, day) in &self.days {
            map.insert((*date, StreamKind::Electoral), day.electoral.clone());
            map.insert((*date, StreamKind::RandomSample), day.baseline.clone());
        }
        map
    }

    /// Points for every date in `range`, undefined where nothing was stored.
    pub fn timeline(&self, range: DateRange) -> Vec<BevPoint> {
        build_timeline(range, &self.aggregates())
    }

    /// The trailing `days` window ending at the latest stored date, keeping
    /// only dates that saw any tweets. Empty when nothing is stored.
    pub fn recent_timeline(&self, days: u32) -> Vec<BevPoint> {
        let Some(end) = self.latest_date() else {
            return Vec::new();
        };
        let Ok(range) = DateRange::trailing(end, days) else {
            return Vec::new();
        };
        self.days
            .range(range.start..=range.end)
            .filter(|(_, d)| d.has_data())
            .map(|(_, d)| d.bev.clone())
            .collect()
    }
}

pub(crate) type DayGroups = HashMap<(NaiveDate, StreamKind), Vec<Tweet>>;

fn compute_day(date: NaiveDate, groups: &DayGroups, scores: &ScoreTable, bot_threshold: f64) -> DaySnapshot {
    let tweets = |stream| groups.get(&(date, stream)).map(Vec::as_slice).unwrap_or(&[]);
    let electoral_tweets = tweets(StreamKind::Electoral);
    let electoral = aggregate_day(date, StreamKind::Electoral, electoral_tweets, scores, bot_threshold)
        .expect("grouped by date and stream");
    let baseline = aggregate_day(date, StreamKind::RandomSample, tweets(StreamKind::RandomSample), scores, bot_threshold)
        .expect("grouped by date and stream");
    let bev = bev_point(&electoral, &baseline).expect("same date");
    let entities = extract_bot_entities(date, electoral_tweets, scores, bot_threshold);
    let tag_cloud = tag_cloud(&entities, DEFAULT_TAG_CLOUD_SIZE);
    DaySnapshot { electoral, baseline, bev, entities, tag_cloud }
}

/// Recomputes every day present in `groups`. Days are independent and are
/// evaluated with `exec`.
pub fn compute_days(
    groups: &DayGroups,
    scores: &ScoreTable,
    bot_threshold: f64,
    exec: Execution,
) -> BTreeMap<NaiveDate, DaySnapshot> {
    let mut dates: Vec<NaiveDate> = groups.keys().map(|(d, _)| *d).collect();
    dates.sort();
    dates.dedup();
    let days = exec.map(&dates, |d| compute_day(*d, groups, scores, bot_threshold));
    dates.into_iter().zip(days).collect()
}

/// Groups tweets by UTC date and stream.
pub fn group_by_day(tweets: impl IntoIterator<Item = Tweet>) -> HashMap<(NaiveDate, StreamKind), Vec<Tweet>> {
    let mut groups: DayGroups = HashMap::new();
    for t in tweets {
        groups.entry((t.date(), t.stream())).or_default().push(t);
    }
    groups
}
