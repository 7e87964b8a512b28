use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, SubsecRound, Utc};
use serde::{Deserialize, Serialize};

/// Which of the two collected streams a tweet came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    /// Topic-filtered stream tracked through the hashtag set.
    Electoral,
    /// Unfiltered random sample used as the background level.
    RandomSample,
}

impl StreamKind {
    pub const ALL: [StreamKind; 2] = [StreamKind::Electoral, StreamKind::RandomSample];

    pub fn as_str(self) -> &'static str {
        match self {
            StreamKind::Electoral => "electoral",
            StreamKind::RandomSample => "random_sample",
        }
    }
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "electoral" => Ok(StreamKind::Electoral),
            "random_sample" | "random" | "baseline" => Ok(StreamKind::RandomSample),
            other => Err(format!("unknown stream kind `{other}`")),
        }
    }
}

/// One ingested post.
///
/// Hashtags and mentions are lowercased on the way in (a leading `#` or `@`
/// is dropped), links get a lowercased scheme and host, and the timestamp is
/// truncated to whole seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Tweet {
    tweet_id: String,
    author_id: String,
    author_handle: String,
    created_at: DateTime<Utc>,
    text: String,
    hashtags: Vec<String>,
    mentions: Vec<String>,
    links: Vec<String>,
    is_retweet: bool,
    stream: StreamKind,
}

impl Tweet {
    pub fn new(
        tweet_id: impl Into<String>,
        author_id: impl Into<String>,
        created_at: DateTime<Utc>,
        stream: StreamKind,
    ) -> Self {
        Self {
            tweet_id: tweet_id.into(),
            author_id: author_id.into(),
            author_handle: String::new(),
            created_at: created_at.trunc_subsecs(0),
            text: String::new(),
            hashtags: Vec::new(),
            mentions: Vec::new(),
            links: Vec::new(),
            is_retweet: false,
            stream,
        }
    }

    pub fn with_handle(mut self, handle: impl Into<String>) -> Self {
        self.author_handle = handle.into();
        self
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = text.into();
        self
    }

    pub fn with_hashtags<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.hashtags = tags
            .into_iter()
            .map(|t| normalize_hashtag(t.as_ref()))
            .filter(|t| !t.is_empty())
            .collect();
        self
    }

    pub fn with_mentions<I, S>(mut self, mentions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.mentions = mentions
            .into_iter()
            .map(|m| normalize_mention(m.as_ref()))
            .filter(|m| !m.is_empty())
            .collect();
        self
    }

    pub fn with_links<I, S>(mut self, links: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.links = links
            .into_iter()
            .map(|l| lowercase_scheme_and_host(l.as_ref().trim()))
            .filter(|l| !l.is_empty())
            .collect();
        self
    }

    pub fn retweet(mut self, is_retweet: bool) -> Self {
        self.is_retweet = is_retweet;
        self
    }

    pub fn tweet_id(&self) -> &str {
        &self.tweet_id
    }

    pub fn author_id(&self) -> &str {
        &self.author_id
    }

    pub fn author_handle(&self) -> &str {
        &self.author_handle
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    /// UTC calendar date used for day bucketing.
    pub fn date(&self) -> NaiveDate {
        self.created_at.date_naive()
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn hashtags(&self) -> &[String] {
        &self.hashtags
    }

    pub fn mentions(&self) -> &[String] {
        &self.mentions
    }

    pub fn links(&self) -> &[String] {
        &self.links
    }

    pub fn is_retweet(&self) -> bool {
        self.is_retweet
    }

    pub fn stream(&self) -> StreamKind {
        self.stream
    }
}

pub fn normalize_hashtag(raw: &str) -> String {
    raw.trim().trim_start_matches('#').to_lowercase()
}

pub fn normalize_mention(raw: &str) -> String {
    raw.trim().trim_start_matches('@').to_lowercase()
}

/// Lowercases the scheme and host of a URL, leaving path, query and
/// fragment untouched. Strings without `://` are returned unchanged.
pub fn lowercase_scheme_and_host(url: &str) -> String {
    let Some(sep) = url.find("://") else {
        return url.to_string();
    };
    let authority_start = sep + 3;
    let authority_end = url[authority_start..]
        .find(['/', '?', '#'])
        .map(|i| authority_start + i)
        .unwrap_or(url.len());
    let mut out = String::with_capacity(url.len());
    out.push_str(&url[..authority_end].to_lowercase());
    out.push_str(&url[authority_end..]);
    out
}
