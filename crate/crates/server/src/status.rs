//! Progress counters the workers publish and the health endpoint reads.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use bev_core::StreamKind;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceState {
    Starting,
    Running,
    Retrying,
    Exhausted,
    Unconfigured,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceProgress {
    pub state: SourceState,
    pub read: u64,
    pub appended: u64,
    pub failures: u32,
    pub last_error: Option<String>,
}

impl Default for SourceProgress {
    fn default() -> Self {
        Self { state: SourceState::Starting, read: 0, appended: 0, failures: 0, last_error: None }
    }
}

#[derive(Debug, Default)]
pub struct PipelineStatus {
    pending_scores: AtomicUsize,
    builds: AtomicU64,
    failed_builds: AtomicU64,
    last_build_error: Mutex<Option<String>>,
    sources: Mutex<BTreeMap<String, SourceProgress>>,
}

impl PipelineStatus {
    pub fn set_pending_scores(&self, n: usize) {
        self.pending_scores.store(n, Ordering::Relaxed);
    }

    pub fn pending_scores(&self) -> usize {
        self.pending_scores.load(Ordering::Relaxed)
    }

    pub fn record_build(&self, result: Result<u64, String>) {
        match result {
            Ok(_) => {
                self.builds.fetch_add(1, Ordering::Relaxed);
                *self.last_build_error.lock().unwrap() = None;
            }
            Err(e) => {
                self.failed_builds.fetch_add(1, Ordering::Relaxed);
                *self.last_build_error.lock().unwrap() = Some(e);
            }
        }
    }

    pub fn builds(&self) -> u64 {
        self.builds.load(Ordering::Relaxed)
    }

    pub fn failed_builds(&self) -> u64 {
        self.failed_builds.load(Ordering::Relaxed)
    }

    pub fn last_build_error(&self) -> Option<String> {
        self.last_build_error.lock().unwrap().clone()
    }

    pub fn update_source(&self, stream: StreamKind, f: impl FnOnce(&mut SourceProgress)) {
        f(self.sources.lock().unwrap().entry(stream.to_string()).or_default());
    }

    pub fn sources(&self) -> BTreeMap<String, SourceProgress> {
        self.sources.lock().unwrap().clone()
    }
}
