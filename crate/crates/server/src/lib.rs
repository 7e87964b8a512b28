//! Streaming pipeline and read-only JSON API for the bot electioneering
//! timeline.
//!
//! Endpoints:
//!
//! - `GET /api/timeline?days=N`
//! - `GET /api/day/{date}/entities?kind=hashtag|mention|link&k=K`
//! - `GET /api/day/{date}/tagcloud`
//! - `GET /api/health`

pub mod api;
pub mod config;
pub mod pipeline;
pub mod service;
pub mod status;

pub use config::{ConfigError, ServiceConfig};
pub use pipeline::{ingest_once, IngestOnceReport, IngestStats, Pipeline, PipelineError};
pub use service::{run, start, ServiceError, ServiceHandle};
