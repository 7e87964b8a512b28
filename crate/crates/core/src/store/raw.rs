//! Append-only tweet log: `raw/<stream>/<date>.ndjson`.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::NaiveDate;

use crate::ingest::archive::{parse_line, to_line};
use crate::ingest::{StreamKind, Tweet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AppendReport {
    pub acknowledged: u64,
    pub duplicates: u64,
}

/// A file and the byte length it had when the cut was taken.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogSegment {
    pub stream: StreamKind,
    pub date: NaiveDate,
    pub path: PathBuf,
    pub len: u64,
}

#[derive(Debug)]
pub(crate) struct RawLog {
    root: PathBuf,
    seen: Mutex<HashSet<(StreamKind, String)>>,
}

fn stream_dir(root: &Path, stream: StreamKind) -> PathBuf {
    root.join(stream.as_str())
}

fn segment_path(root: &Path, stream: StreamKind, date: NaiveDate) -> PathBuf {
    stream_dir(root, stream).join(format!("{date}.ndjson"))
}

fn list_segments(root: &Path) -> io::Result<Vec<LogSegment>> {
    let mut out = Vec::new();
    for stream in StreamKind::ALL {
        let dir = stream_dir(root, stream);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
            Err(e) => return Err(e),
        };
        for entry in entries {
            let entry = entry?;
            let path = entry.path();
            let Some(date) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".ndjson"))
                .and_then(|d| d.parse::<NaiveDate>().ok())
            else {
                continue;
            };
            out.push(LogSegment { stream, date, len: entry.metadata()?.len(), path });
        }
    }
    out.sort_by_key(|s| (s.stream, s.date));
    Ok(out)
}

/// Parses the first `len` bytes of a segment. A torn trailing line is
/// ignored along with any malformed ones.
fn read_segment(seg: &LogSegment) -> io::Result<Vec<Tweet>> {
    let file = File::open(&seg.path)?;
    let reader = BufReader::new(file.take(seg.len));
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, seg.stream) {
            Ok((t, _)) => out.push(t),
            Err(err) => tracing::warn!(path = %seg.path.display(), %err, "skipping stored line"),
        }
    }
    Ok(out)
}

impl RawLog {
    pub(crate) fn open(root: PathBuf) -> io::Result<Self> {
        for stream in StreamKind::ALL {
            fs::create_dir_all(stream_dir(&root, stream))?;
        }
        let mut seen = HashSet::new();
        for seg in list_segments(&root)? {
            for t in read_segment(&seg)? {
                seen.insert((seg.stream, t.tweet_id().to_string()));
            }
        }
        Ok(Self { root, seen: Mutex::new(seen) })
    }

    pub(crate) fn append(&self, batch: &[Tweet]) -> io::Result<AppendReport> {
        let mut seen = self.seen.lock().unwrap();
        let mut report = AppendReport::default();
        let mut by_segment: BTreeMap<(StreamKind, NaiveDate), Vec<&Tweet>> = BTreeMap::new();
        let mut fresh = HashSet::new();
        for t in batch {
            let key = (t.stream(), t.tweet_id().to_string());
            if seen.contains(&key) || !fresh.insert(key) {
                report.duplicates += 1;
                continue;
            }
            by_segment.entry((t.stream(), t.date())).or_default().push(t);
        }
        for ((stream, date), tweets) in by_segment {
            let mut buf = String::new();
            for t in &tweets {
                buf.push_str(&to_line(t, None));
                buf.push('\n');
            }
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(segment_path(&self.root, stream, date))?;
            file.write_all(buf.as_bytes())?;
            file.sync_data()?;
            for t in tweets {
                seen.insert((stream, t.tweet_id().to_string()));
                report.acknowledged += 1;
            }
        }
        Ok(report)
    }

    /// Segment list and lengths as of now. Holding the append lock while
    /// listing means every segment ends on a record boundary.
    pub(crate) fn cut(&self) -> io::Result<Vec<LogSegment>> {
        let _guard = self.seen.lock().unwrap();
        list_segments(&self.root)
    }

    pub(crate) fn read(&self, seg: &LogSegment) -> io::Result<Vec<Tweet>> {
        read_segment(seg)
    }

    pub(crate) fn len(&self) -> usize {
        self.seen.lock().unwrap().len()
    }

    /// Deletes segments dated before `oldest_kept`. Their ids stay in the
    /// dedup index so redelivered tweets are still dropped.
    pub(crate) fn prune_before(&self, oldest_kept: NaiveDate) -> io::Result<usize> {
        let _guard = self.seen.lock().unwrap();
        let mut removed = 0;
        for seg in list_segments(&self.root)? {
            if seg.date < oldest_kept {
                fs::remove_file(&seg.path)?;
                removed += 1;
            }
        }
        Ok(removed)
    }
}
