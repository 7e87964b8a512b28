mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use bev_core::entities::top_entities;
use bev_core::metrics::BevPoint;
use bev_core::store::{Snapshot, Store};
use bev_core::EntityKind;
use bev_server::api::{explorer_url, router, AppState};
use bev_server::ingest_once;
use bev_server::status::PipelineStatus;
use chrono::{Duration, NaiveDate};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    store: Arc<Store>,
    app: Router,
}

fn fixture(days: u32, build: bool) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::replay_config(dir.path(), days);
    let report = ingest_once(&cfg).unwrap();
    assert_eq!(report.scorer.pending, 0);
    let store = Arc::new(Store::open(&cfg.data_dir).unwrap());
    if build {
        store.build_snapshot(chrono::Utc::now(), &store.score_table().unwrap(), 4.0).unwrap();
    }
    let app = router(AppState {
        store: store.clone(),
        status: Arc::new(PipelineStatus::default()),
        timeline_days: cfg.timeline_days,
        explorer_url_template: common::TEMPLATE.into(),
    });
    Fixture { _dir: dir, store, app }
}

async fn get(app: &Router, uri: &str) -> (StatusCode, axum::http::HeaderMap, Value) {
    let resp = app.clone().oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let (parts, body) = resp.into_parts();
    let bytes = body.collect().await.unwrap().to_bytes();
    (parts.status, parts.headers, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn snapshot(f: &Fixture) -> Arc<Snapshot> {
    f.store.current_snapshot().unwrap()
}

#[tokio::test]
async fn warming_up_answers_503_with_retry_hint() {
    let f = fixture(2, false);
    let (status, headers, body) = get(&f.app, "/api/timeline").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert!(headers.contains_key("retry-after"));
    assert!(body["error"].is_string());

    let (status, _, health) = get(&f.app, "/api/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["status"], "warming");
    assert!(health.get("snapshot_id").is_none());
}

#[tokio::test]
async fn default_timeline_is_the_latest_eight_days() {
    let f = fixture(10, true);
    let snap = snapshot(&f);
    assert_eq!(snap.days.len(), 10);
    let (status, _, body) = get(&f.app, "/api/timeline").await;
    assert_eq!(status, StatusCode::OK);
    let points: Vec<BevPoint> = serde_json::from_value(body).unwrap();
    let latest = *snap.days.keys().last().unwrap();
    let expected: Vec<NaiveDate> = (0..8).rev().map(|i| latest - Duration::days(i)).collect();
    assert_eq!(points.iter().map(|p| p.date).collect::<Vec<_>>(), expected);
    assert!(points.iter().all(|p| p.defined.bev));

    let (_, _, one) = get(&f.app, "/api/timeline?days=1").await;
    assert_eq!(one.as_array().unwrap().len(), 1);
    let (_, _, all) = get(&f.app, "/api/timeline?days=30").await;
    assert_eq!(all.as_array().unwrap().len(), 10);
    for bad in ["0", "367", "abc", "-3"] {
        let (status, _, _) = get(&f.app, &format!("/api/timeline?days={bad}")).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "days={bad}");
    }
}

#[tokio::test]
async fn entities_pass_through_top_k_with_explorer_links() {
    let f = fixture(3, true);
    let snap = snapshot(&f);
    let (date, day) = snap.days.iter().next().unwrap();

    for kind in EntityKind::ALL {
        let (status, _, body) = get(&f.app, &format!("/api/day/{date}/entities?kind={kind}")).await;
        assert_eq!(status, StatusCode::OK);
        let rows = body.as_array().unwrap();
        let expected = top_entities(&day.entities, kind, 20);
        assert!(!expected.is_empty());
        assert_eq!(rows.len(), expected.len());
        for (row, want) in rows.iter().zip(&expected) {
            assert_eq!(row["value"], want.value.as_str());
            assert_eq!(row["count"], want.count);
            assert_eq!(row["kind"], kind.as_str());
            assert_eq!(row["explorer_url"], explorer_url(common::TEMPLATE, kind, &want.value));
        }
    }

    let (_, _, links) = get(&f.app, &format!("/api/day/{date}/entities?kind=link&k=1")).await;
    let links = links.as_array().unwrap();
    assert_eq!(links.len(), 1);
    let value = links[0]["value"].as_str().unwrap();
    assert!(value.starts_with("https://example.org/p") && value.ends_with("?ref=x"));
    assert_eq!(
        links[0]["explorer_url"],
        format!("https://explorer.test/?type=link&q=https%3A%2F%2Fexample.org%2Fp{}%3Fref%3Dx", &value[21..value.len() - 6])
    );

    let (status, _, _) = get(&f.app, &format!("/api/day/{date}/entities?kind=emoji")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _, _) = get(&f.app, &format!("/api/day/{date}/entities")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _, _) = get(&f.app, &format!("/api/day/{date}/entities?kind=hashtag&k=0")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _, _) = get(&f.app, "/api/day/2001-01-01/entities?kind=hashtag").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = get(&f.app, "/api/day/yesterday/entities?kind=hashtag").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn day_without_bot_tweets_has_empty_lists() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path()).unwrap());
    let ts = chrono::DateTime::parse_from_rfc3339("2018-11-06T10:00:00Z").unwrap().to_utc();
    let tweets = [
        bev_core::Tweet::new("1", "human", ts, bev_core::StreamKind::Electoral).with_hashtags(["vote"]),
        bev_core::Tweet::new("2", "human", ts, bev_core::StreamKind::RandomSample),
    ];
    store.append_tweets(&tweets).unwrap();
    let scores: bev_core::ScoreTable = [("human", 1.0)].into_iter().collect();
    store.build_snapshot(chrono::Utc::now(), &scores, 4.0).unwrap();
    let app = router(AppState {
        store,
        status: Arc::new(PipelineStatus::default()),
        timeline_days: 8,
        explorer_url_template: common::TEMPLATE.into(),
    });
    let (status, _, body) = get(&app, "/api/day/2018-11-06/entities?kind=hashtag").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, Value::Array(vec![]));
    let (status, _, body) = get(&app, "/api/day/2018-11-06/tagcloud").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, Value::Array(vec![]));
}

#[tokio::test]
async fn tag_cloud_weights_equal_counts() {
    let f = fixture(2, true);
    let snap = snapshot(&f);
    let (date, day) = snap.days.iter().next().unwrap();
    let (status, _, body) = get(&f.app, &format!("/api/day/{date}/tagcloud")).await;
    assert_eq!(status, StatusCode::OK);
    let rows = body.as_array().unwrap();
    assert_eq!(rows.len(), day.tag_cloud.len());
    assert!(rows.len() <= 50);
    for row in rows {
        let kind: EntityKind = row["kind"].as_str().unwrap().parse().unwrap();
        let raw = row["value"].as_str().unwrap();
        let value = if kind == EntityKind::Mention { raw.strip_prefix('@').unwrap() } else { raw };
        let count = day.entities.iter().find(|e| e.kind == kind && e.value == value).unwrap().count;
        assert_eq!(row["weight"].as_f64().unwrap(), count as f64);
    }
    let (status, _, _) = get(&f.app, "/api/day/2001-01-01/tagcloud").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn health_reports_the_published_snapshot() {
    let f = fixture(2, true);
    let snap = snapshot(&f);
    let (_, _, health) = get(&f.app, "/api/health").await;
    assert_eq!(health["status"], "ok");
    assert_eq!(health["snapshot_id"], snap.snapshot_id);
    let built_at: chrono::DateTime<chrono::Utc> = serde_json::from_value(health["built_at"].clone()).unwrap();
    assert_eq!(built_at, snap.built_at);
    assert!(health["build_age_seconds"].as_i64().unwrap() >= 0);
    assert_eq!(health["pending_scores"], 0);
}

#[tokio::test]
async fn responses_allow_cross_origin_reads() {
    let f = fixture(1, true);
    let req = Request::get("/api/health").header("origin", "http://dashboard.test").body(Body::empty()).unwrap();
    let resp = f.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}
