//! Hashtags, mentions and links pushed by bot-classified accounts.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ingest::{lowercase_scheme_and_host, StreamKind, Tweet};
use crate::scoring::{exceeds_threshold, ScoreState, ScoreTable};

pub const DEFAULT_TOP_K: usize = 20;
pub const DEFAULT_TAG_CLOUD_SIZE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Hashtag,
    Mention,
    Link,
}

impl EntityKind {
    pub const ALL: [EntityKind; 3] = [EntityKind::Hashtag, EntityKind::Mention, EntityKind::Link];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Hashtag => "hashtag",
            EntityKind::Mention => "mention",
            EntityKind::Link => "link",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hashtag" => Ok(EntityKind::Hashtag),
            "mention" => Ok(EntityKind::Mention),
            "link" => Ok(EntityKind::Link),
            other => Err(format!("unknown entity kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCount {
    pub date: NaiveDate,
    pub kind: EntityKind,
    pub value: String,
    /// Bot tweets containing the entity.
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagCloudEntry {
    pub value: String,
    pub kind: EntityKind,
    pub weight: f64,
}

/// Lowercase scheme and host, drop the fragment, keep the query.
pub fn normalize_link(url: &str) -> String {
    let url = url.trim();
    let without_fragment = url.split_once('#').map_or(url, |(head, _)| head);
    lowercase_scheme_and_host(without_fragment)
}

/// Count descending, then value ascending.
pub fn ranking_order(a_count: u64, a_value: &str, b_count: u64, b_value: &str) -> Ordering {
    b_count.cmp(&a_count).then_with(|| a_value.cmp(b_value))
}

fn tweet_entities(tweet: &Tweet) -> BTreeSet<(EntityKind, String)> {
    let mut set = BTreeSet::new();
    set.extend(tweet.hashtags().iter().map(|h| (EntityKind::Hashtag, h.to_lowercase())));
    set.extend(tweet.mentions().iter().map(|m| (EntityKind::Mention, m.to_lowercase())));
    set.extend(
        tweet
            .links()
            .iter()
            .map(|l| (EntityKind::Link, normalize_link(l)))
            .filter(|(_, l)| !l.is_empty()),
    );
    set
}

/// Per-day entity counts over tweets by accounts scoring above
/// `bot_threshold`. An entity counts once per tweet. Output is sorted by kind,
/// then ranking order.
pub fn extract_bot_entities<'a>(
    date: NaiveDate,
    tweets: impl IntoIterator<Item = &'a Tweet>,
    scores: &ScoreTable,
    bot_threshold: f64,
) -> Vec<EntityCount> {
    let mut counts: HashMap<(EntityKind, String), u64> = HashMap::new();
    for tweet in tweets {
        debug_assert_eq!(tweet.stream(), StreamKind::Electoral);
        debug_assert_eq!(tweet.date(), date);
        let is_bot = matches!(
            scores.lookup(tweet.author_id()),
            ScoreState::Resolved(s) if exceeds_threshold(s, bot_threshold)
        );
        if !is_bot {
            continue;
        }
        for key in tweet_entities(tweet) {
            *counts.entry(key).or_default() += 1;
        }
    }
    let mut out: Vec<EntityCount> = counts
        .into_iter()
        .map(|((kind, value), count)| EntityCount { date, kind, value, count })
        .collect();
    out.sort_by(|a, b| a.kind.cmp(&b.kind).then_with(|| ranking_order(a.count, &a.value, b.count, &b.value)));
    out
}

/// Top `k` entities of one kind by count, ties broken by value.
pub fn top_entities(counts: &[EntityCount], kind: EntityKind, k: usize) -> Vec<EntityCount> {
    let mut of_kind: Vec<&EntityCount> = counts.iter().filter(|c| c.kind == kind).collect();
    of_kind.sort_by(|a, b| ranking_order(a.count, &a.value, b.count, &b.value));
    of_kind.into_iter().take(k).cloned().collect()
}

/// Display form used in the merged cloud: mentions get their `@`.
pub fn display_value(kind: EntityKind, value: &str) -> String {
    match kind {
        EntityKind::Mention => format!("@{value}"),
        EntityKind::Hashtag | EntityKind::Link => value.to_string(),
    }
}

/// All kinds merged, ranked like [`top_entities`], truncated to
/// `max_entries`. Weight equals count.
pub fn tag_cloud(counts: &[EntityCount], max_entries: usize) -> Vec<TagCloudEntry> {
    let mut merged: Vec<(String, EntityKind, u64)> = counts
        .iter()
        .map(|c| (display_value(c.kind, &c.value), c.kind, c.count))
        .collect();
    merged.sort_by(|a, b| ranking_order(a.2, &a.0, b.2, &b.0).then_with(|| a.1.cmp(&b.1)));
    merged
        .into_iter()
        .take(max_entries)
        .map(|(value, kind, count)| TagCloudEntry { value, kind, weight: count as f64 })
        .collect()
}
