//! Bot Electioneering Volume core: tweet sources, bot scoring, daily
//! aggregation, bot entity ranking, hashtag expansion and snapshot storage.

pub mod entities;
pub mod expansion;
pub mod ingest;
pub mod metrics;
pub mod par;
pub mod scoring;
pub mod store;

pub use entities::{EntityCount, EntityKind, TagCloudEntry};
pub use expansion::{ExpansionConfig, HashtagSet};
pub use ingest::{StreamKind, Tweet};
pub use metrics::{BevPoint, DailyAggregate, DateRange};
pub use par::Execution;
pub use scoring::{BotScore, ScoreTable, Scorer, ScorerConfig};
pub use store::{Snapshot, Store, StoreError};
