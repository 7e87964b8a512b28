//! Tracked hashtag list construction: seeds, snowball expansion by
//! co-occurrence over a corpus, and manual edits.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ingest::{normalize_hashtag, Tweet};
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Seed,
    Expanded,
    ManualAdd,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Seed => "seed",
            Provenance::Expanded => "expanded",
            Provenance::ManualAdd => "manual_add",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashtagEntry {
    pub tag: String,
    pub provenance: Provenance,
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedTag {
    pub tag: String,
    pub reason: String,
}

/// The tracked hashtag list. Tags are lowercase and unique; a removed tag is
/// never an entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "HashtagSetRepr", into = "HashtagSetRepr")]
pub struct HashtagSet {
    entries: Vec<HashtagEntry>,
    removed: Vec<RemovedTag>,
    index: HashSet<String>,
}

#[derive(Serialize, Deserialize)]
struct HashtagSetRepr {
    entries: Vec<HashtagEntry>,
    #[serde(default)]
    removed: Vec<RemovedTag>,
}

impl From<HashtagSetRepr> for HashtagSet {
    fn from(r: HashtagSetRepr) -> Self {
        let mut set = Self { entries: r.entries, removed: r.removed, index: HashSet::new() };
        set.rebuild_index();
        set
    }
}

impl From<HashtagSet> for HashtagSetRepr {
    fn from(s: HashtagSet) -> Self {
        Self { entries: s.entries, removed: s.removed }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ExpansionError {
    #[error("`{0}` was manually removed; un-remove it before adding it back")]
    TagRemoved(String),
    #[error("seed set is empty")]
    NoSeeds,
    #[error("invalid expansion config: {0}")]
    InvalidConfig(String),
}

impl HashtagSet {
    pub fn from_seeds<I, S>(seeds: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = Self::default();
        for s in seeds {
            set.insert(&normalize_hashtag(s.as_ref()), Provenance::Seed, 0);
        }
        set
    }

    fn insert(&mut self, tag: &str, provenance: Provenance, round: u32) -> bool {
        if tag.is_empty() || self.index.contains(tag) {
            return false;
        }
        self.index.insert(tag.to_string());
        self.entries.push(HashtagEntry { tag: tag.to_string(), provenance, round });
        true
    }

    fn rebuild_index(&mut self) {
        self.index = self.entries.iter().map(|e| e.tag.clone()).collect();
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.index.contains(tag)
    }

    pub fn is_removed(&self, tag: &str) -> bool {
        self.removed.iter().any(|r| r.tag == tag)
    }

    pub fn entries(&self) -> &[HashtagEntry] {
        &self.entries
    }

    pub fn removed(&self) -> &[RemovedTag] {
        &self.removed
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.tag.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Puts a removed tag back in play. Returns whether it was removed.
    pub fn unremove(&mut self, tag: &str) -> bool {
        let tag = normalize_hashtag(tag);
        let before = self.removed.len();
        self.removed.retain(|r| r.tag != tag);
        before != self.removed.len()
    }

    /// Plain text, one tag per line, no `#`.
    pub fn to_plain_text(&self) -> String {
        let mut s = String::new();
        for tag in self.tags() {
            s.push_str(tag);
            s.push('\n');
        }
        s
    }

    /// Parses a plain list: one tag per line, blank lines ignored, an optional
    /// leading `#` dropped.
    pub fn parse_plain_text(text: &str) -> Self {
        Self::from_seeds(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hashtag set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Loads a `.json` structured file or a plain list.
    pub fn load(path: &Path) -> io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
        } else {
            Ok(Self::parse_plain_text(&text))
        }
    }

    /// Writes `<stem>.txt` and `<stem>.json` next to each other.
    pub fn save(&self, dir: &Path, stem: &str) -> io::Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let txt = dir.join(format!("{stem}.txt"));
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&txt, self.to_plain_text())?;
        std::fs::write(&json, self.to_json())?;
        Ok((txt, json))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionConfig {
    pub min_cooccurrence: u64,
    pub min_cooccurrence_rate: f64,
    pub max_rounds: u32,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self { min_cooccurrence: 10, min_cooccurrence_rate: 0.5, max_rounds: 3 }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<(), ExpansionError> {
        if self.min_cooccurrence < 1 {
            return Err(ExpansionError::InvalidConfig("min_cooccurrence must be at least 1".into()));
        }
        if !(self.min_cooccurrence_rate > 0.0 && self.min_cooccurrence_rate <= 1.0) {
            return Err(ExpansionError::InvalidConfig("min_cooccurrence_rate must lie in (0, 1]".into()));
        }
        if self.max_rounds < 1 {
            return Err(ExpansionError::InvalidConfig("max_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionOutcome {
    pub set: HashtagSet,
    /// Tags admitted in each executed round, sorted.
    pub rounds: Vec<Vec<String>>,
    /// Set when the corpus held no tweets.
    pub empty_corpus: bool,
}

/// Per-candidate counts for one round: tweets containing the tag, and of
/// those, tweets that also contain a tracked tag.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
struct Counts {
    total: u64,
    with_tracked: u64,
}

type CountMap = HashMap<String, Counts>;

fn count_tweet(tags: &BTreeSet<String>, set: &HashtagSet, counts: &mut CountMap) {
    let co = tags.iter().any(|t| set.contains(t));
    for t in tags {
        if set.contains(t) || set.is_removed(t) {
            continue;
        }
        let c = counts.entry(t.clone()).or_default();
        c.total += 1;
        if co {
            c.with_tracked += 1;
        }
    }
}

fn merge(mut a: CountMap, b: CountMap) -> CountMap {
    if a.len() < b.len() {
        return merge(b, a);
    }
    for (k, v) in b {
        let c = a.entry(k).or_default();
        c.total += v.total;
        c.with_tracked += v.with_tracked;
    }
    a
}

fn count_round(corpus: &[BTreeSet<String>], set: &HashtagSet, exec: Execution) -> CountMap {
    exec.fold_chunks(
        corpus,
        4096,
        CountMap::new,
        |mut m, tags| {
            count_tweet(tags, set, &mut m);
            m
        },
        merge,
    )
}

/// Snowball expansion. Each round evaluates every candidate against the set
/// as it stood when the round began; a candidate is admitted when it
/// co-occurs with the set in at least `min_cooccurrence` tweets and at least
/// `min_cooccurrence_rate` of the tweets containing it. Stops at a fixed
/// point or after `max_rounds`.
pub fn expand(
    seeds: &HashtagSet,
    corpus: &[Tweet],
    config: &ExpansionConfig,
) -> Result<ExpansionOutcome, ExpansionError> {
    expand_with(seeds, corpus, config, Execution::default())
}

pub fn expand_with(
    seeds: &HashtagSet,
    corpus: &[Tweet],
    config: &ExpansionConfig,
    exec: Execution,
) -> Result<ExpansionOutcome, ExpansionError> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(ExpansionError::NoSeeds);
    }
    let mut set = seeds.clone();
    if corpus.is_empty() {
        tracing::warn!("expansion corpus is empty; returning seeds unchanged");
        return Ok(ExpansionOutcome { set, rounds: Vec::new(), empty_corpus: true });
    }

    let tag_sets: Vec<BTreeSet<String>> = corpus
        .iter()
        .map(|t| t.hashtags().iter().cloned().collect())
        .filter(|s: &BTreeSet<String>| !s.is_empty())
        .collect();

    let first_round = set.entries.iter().map(|e| e.round).max().unwrap_or(0) + 1;
    let mut rounds = Vec::new();
    for round in first_round..first_round + config.max_rounds {
        let counts = count_round(&tag_sets, &set, exec);
        let mut admitted: Vec<String> = counts
            .into_iter()
            .filter(|(_, c)| {
                c.with_tracked >= config.min_cooccurrence
                    && c.with_tracked as f64 >= config.min_cooccurrence_rate * c.total as f64
            })
            .map(|(t, _)| t)
            .collect();
        if admitted.is_empty() {
            break;
        }
        admitted.sort();
        for tag in &admitted {
            set.insert(tag, Provenance::Expanded, round);
        }
        rounds.push(admitted);
    }
    Ok(ExpansionOutcome { set, rounds, empty_corpus: false })
}

/// Applies manual removals (with reasons) and additions. Removals are
/// idempotent; adding a removed tag is rejected.
pub fn apply_manual_edits<R, S>(
    set: &HashtagSet,
    removals: impl IntoIterator<Item = (R, S)>,
    additions: impl IntoIterator<Item = R>,
) -> Result<HashtagSet, ExpansionError>
where
    R: AsRef<str>,
    S: Into<String>,
{
    let mut out = set.clone();
    for (tag, reason) in removals {
        let tag = normalize_hashtag(tag.as_ref());
        out.entries.retain(|e| e.tag != tag);
        if !out.is_removed(&tag) {
            out.removed.push(RemovedTag { tag, reason: reason.into() });
        }
    }
    out.rebuild_index();
    for tag in additions {
        let tag = normalize_hashtag(tag.as_ref());
        if out.is_removed(&tag) {
            return Err(ExpansionError::TagRemoved(tag));
        }
        out.insert(&tag, Provenance::ManualAdd, 0);
    }
    Ok(out)
}
