//! Newline-delimited archive records.
//!
//! One JSON object per line with the fields `id`, `user_id`, `user_handle`,
//! `created_at` (ISO-8601 UTC), `text`, `hashtags`, `mentions`, `links`,
//! `is_retweet` and, for synthetic fixtures, `true_score`. Unknown fields are
//! ignored.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::tweet::{StreamKind, Tweet};
use crate::scoring::{MAX_SCORE, MIN_SCORE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub id: String,
    pub user_id: String,
    #[serde(default)]
    pub user_handle: String,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub hashtags: Vec<String>,
    #[serde(default)]
    pub mentions: Vec<String>,
    #[serde(default)]
    pub links: Vec<String>,
    #[serde(default)]
    pub is_retweet: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_score: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("record has an empty `{0}` field")]
    EmptyField(&'static str),
    #[error("true_score {0} is outside [0, 5]")]
    ScoreOutOfRange(f64),
}

impl ArchiveRecord {
    pub fn from_tweet(tweet: &Tweet, true_score: Option<f64>) -> Self {
        Self {
            id: tweet.tweet_id().to_string(),
            user_id: tweet.author_id().to_string(),
            user_handle: tweet.author_handle().to_string(),
            created_at: tweet.created_at(),
            text: tweet.text().to_string(),
            hashtags: tweet.hashtags().to_vec(),
            mentions: tweet.mentions().to_vec(),
            links: tweet.links().to_vec(),
            is_retweet: tweet.is_retweet(),
            true_score,
        }
    }

    pub fn into_tweet(self, stream: StreamKind) -> Result<(Tweet, Option<f64>), RecordError> {
        if self.id.trim().is_empty() {
            return Err(RecordError::EmptyField("id"));
        }
        if self.user_id.trim().is_empty() {
            return Err(RecordError::EmptyField("user_id"));
        }
        if let Some(s) = self.true_score {
            if !(MIN_SCORE..=MAX_SCORE).contains(&s) {
                return Err(RecordError::ScoreOutOfRange(s));
            }
        }
        let tweet = Tweet::new(self.id, self.user_id, self.created_at, stream)
            .with_handle(self.user_handle)
            .with_text(self.text)
            .with_hashtags(self.hashtags)
            .with_mentions(self.mentions)
            .with_links(self.links)
            .retweet(self.is_retweet);
        Ok((tweet, self.true_score))
    }
}

pub fn parse_line(line: &str, stream: StreamKind) -> Result<(Tweet, Option<f64>), RecordError> {
    let record: ArchiveRecord = serde_json::from_str(line)?;
    record.into_tweet(stream)
}

pub fn to_line(tweet: &Tweet, true_score: Option<f64>) -> String {
    // Serializing a plain struct of strings, numbers and bools cannot fail.
    serde_json::to_string(&ArchiveRecord::from_tweet(tweet, true_score))
        .expect("archive record serializes")
}

/// Everything that parsed out of one archive file.
#[derive(Debug, Default)]
pub struct ArchiveContents {
    pub records: Vec<(Tweet, Option<f64>)>,
    /// Non-blank lines read.
    pub lines: u64,
    pub skipped: u64,
}

/// Reads an archive, skipping (and counting) malformed lines. Blank lines are
/// not records and are ignored.
pub fn read_archive(path: &Path, stream: StreamKind) -> io::Result<ArchiveContents> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = ArchiveContents::default();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.lines += 1;
        match parse_line(&line, stream) {
            Ok(rec) => out.records.push(rec),
            Err(err) => {
                tracing::debug!(path = %path.display(), %err, "skipping archive line");
                out.skipped += 1;
            }
        }
    }
    Ok(out)
}

pub fn write_archive<'a, I>(path: &Path, records: I) -> io::Result<u64>
where
    I: IntoIterator<Item = (&'a Tweet, Option<f64>)>,
{
    let mut w = BufWriter::new(File::create(path)?);
    let mut n = 0;
    for (tweet, score) in records {
        w.write_all(to_line(tweet, score).as_bytes())?;
        w.write_all(b"\n")?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}
