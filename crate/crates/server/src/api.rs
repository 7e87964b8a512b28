//! Read-only JSON API over the current snapshot.
//!
//! Every handler grabs the published snapshot once and answers from it, so a
//! response never mixes two builds.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use bev_core::entities::{top_entities, DEFAULT_TOP_K};
use bev_core::metrics::BevPoint;
use bev_core::store::{DaySnapshot, Snapshot, Store, StoreError};
use bev_core::{EntityCount, EntityKind, TagCloudEntry};
use chrono::{DateTime, NaiveDate, Utc};
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::Serialize;
use tower_http::cors::{Any, CorsLayer};

use crate::config::MAX_TIMELINE_DAYS;
use crate::status::{PipelineStatus, SourceProgress};

/// Seconds a client should wait before retrying during warm-up.
pub const RETRY_AFTER_SECS: u64 = 5;
pub const MAX_TOP_K: usize = 1000;

const VALUE_ESCAPES: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub status: Arc<PipelineStatus>,
    pub timeline_days: u32,
    pub explorer_url_template: Arc<str>,
}

/// Substitutes `{kind}` and the percent-encoded `{value}` into the template.
pub fn explorer_url(template: &str, kind: EntityKind, value: &str) -> String {
    let encoded = utf8_percent_encode(value, VALUE_ESCAPES).to_string();
    template.replace("{kind}", kind.as_str()).replace("{value}", &encoded)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityEntry {
    #[serde(flatten)]
    pub entity: EntityCount,
    pub explorer_url: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Health {
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub built_at: Option<DateTime<Utc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub build_age_seconds: Option<i64>,
    pub pending_scores: usize,
    pub stored_tweets: usize,
    pub builds: u64,
    pub failed_builds: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_build_error: Option<String>,
    pub sources: BTreeMap<String, SourceProgress>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, message: message.into() }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self { status: StatusCode::NOT_FOUND, message: message.into() }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::WarmingUp => Self { status: StatusCode::SERVICE_UNAVAILABLE, message: e.to_string() },
            other => Self { status: StatusCode::INTERNAL_SERVER_ERROR, message: other.to_string() },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(serde_json::json!({ "error": self.message }));
        if self.status == StatusCode::SERVICE_UNAVAILABLE {
            (self.status, [(header::RETRY_AFTER, RETRY_AFTER_SECS.to_string())], body).into_response()
        } else {
            (self.status, body).into_response()
        }
    }
}

type Params = Query<HashMap<String, String>>;

fn current(state: &AppState) -> Result<Arc<Snapshot>, ApiError> {
    Ok(state.store.current_snapshot()?)
}

fn parse_days(raw: Option<&String>, default: u32) -> Result<u32, ApiError> {
    let Some(raw) = raw else { return Ok(default) };
    raw.parse::<u32>()
        .ok()
        .filter(|d| (1..=MAX_TIMELINE_DAYS).contains(d))
        .ok_or_else(|| ApiError::bad_request(format!("days must be an integer in 1..={MAX_TIMELINE_DAYS}")))
}

fn day<'a>(snapshot: &'a Snapshot, raw: &str) -> Result<&'a DaySnapshot, ApiError> {
    let date: NaiveDate = raw.parse().map_err(|_| ApiError::bad_request(format!("`{raw}` is not an ISO-8601 date")))?;
    snapshot.days.get(&date).ok_or_else(|| ApiError::not_found(format!("no data for {date}")))
}

async fn timeline(State(state): State<AppState>, Query(q): Params) -> Result<Json<Vec<BevPoint>>, ApiError> {
    let days = parse_days(q.get("days"), state.timeline_days)?;
    let snapshot = current(&state)?;
    Ok(Json(snapshot.recent_timeline(days)))
}

async fn entities(
    State(state): State<AppState>,
    Path(date): Path<String>,
    Query(q): Params,
) -> Result<Json<Vec<EntityEntry>>, ApiError> {
    let kind: EntityKind = q
        .get("kind")
        .ok_or_else(|| ApiError::bad_request("kind is required: hashtag, mention or link"))?
        .parse()
        .map_err(ApiError::bad_request)?;
    let k = match q.get("k") {
        None => DEFAULT_TOP_K,
        Some(raw) => raw
            .parse::<usize>()
            .ok()
            .filter(|k| (1..=MAX_TOP_K).contains(k))
            .ok_or_else(|| ApiError::bad_request(format!("k must be an integer in 1..={MAX_TOP_K}")))?,
    };
    let snapshot = current(&state)?;
    let day = day(&snapshot, &date)?;
    let entries = top_entities(&day.entities, kind, k)
        .into_iter()
        .map(|entity| EntityEntry {
            explorer_url: explorer_url(&state.explorer_url_template, entity.kind, &entity.value),
            entity,
        })
        .collect();
    Ok(Json(entries))
}

async fn tagcloud(State(state): State<AppState>, Path(date): Path<String>) -> Result<Json<Vec<TagCloudEntry>>, ApiError> {
    let snapshot = current(&state)?;
    Ok(Json(day(&snapshot, &date)?.tag_cloud.clone()))
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    let snapshot = state.store.current_snapshot().ok();
    let status = &state.status;
    Json(Health {
        status: if snapshot.is_some() { "ok" } else { "warming" },
        snapshot_id: snapshot.as_ref().map(|s| s.snapshot_id),
        built_at: snapshot.as_ref().map(|s| s.built_at),
        build_age_seconds: snapshot.as_ref().map(|s| (Utc::now() - s.built_at).num_seconds().max(0)),
        pending_scores: status.pending_scores(),
        stored_tweets: state.store.stored_tweet_count(),
        builds: status.builds(),
        failed_builds: status.failed_builds(),
        last_build_error: status.last_build_error(),
        sources: status.sources(),
    })
}

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods([Method::GET]);
    Router::new()
        .route("/api/timeline", get(timeline))
        .route("/api/day/{date}/entities", get(entities))
        .route("/api/day/{date}/tagcloud", get(tagcloud))
        .route("/api/health", get(health))
        .layer(cors)
        .with_state(state)
}
