use std::sync::Arc;

use bev_core::ingest::{StreamKind, Tweet};
use bev_core::scoring::{MockBackend, ScoreOutcome, ScorePersistence, Scorer, ScorerConfig};
use bev_core::store::{Store, StoreError};
use bev_core::{Execution, ScoreTable};
use chrono::{DateTime, NaiveDate, TimeZone, Utc};

fn ts(day: u32, hour: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2018, 10, day, hour, 0, 0).unwrap()
}

fn tweets(prefix: &str, n: usize, stream: StreamKind, author: &str, day: u32) -> Vec<Tweet> {
    (0..n)
        .map(|i| {
            Tweet::new(format!("{prefix}{i}"), author, ts(day, (i % 24) as u32), stream)
                .with_hashtags(["maga"])
                .with_mentions([format!("m{}", i % 3)])
        })
        .collect()
}

fn far_future() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2030, 1, 1, 0, 0, 0).unwrap()
}

#[test]
fn append_acknowledges_and_deduplicates() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let batch = tweets("t", 100, StreamKind::Electoral, "a", 22);
    let r = store.append_tweets(&batch).unwrap();
    assert_eq!((r.acknowledged, r.duplicates), (100, 0));
    let r = store.append_tweets(&batch).unwrap();
    assert_eq!((r.acknowledged, r.duplicates), (0, 100));

    let mut mixed = tweets("t", 50, StreamKind::Electoral, "a", 22);
    mixed.extend(tweets("n", 50, StreamKind::Electoral, "a", 22));
    let r = store.append_tweets(&mixed).unwrap();
    assert_eq!((r.acknowledged, r.duplicates), (50, 50));

    // Same ids on the other stream are distinct tweets.
    let r = store.append_tweets(&tweets("t", 10, StreamKind::RandomSample, "a", 22)).unwrap();
    assert_eq!(r.acknowledged, 10);
}

#[test]
fn duplicates_inside_one_batch_are_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let mut batch = tweets("t", 5, StreamKind::Electoral, "a", 22);
    batch.extend(tweets("t", 5, StreamKind::Electoral, "a", 22));
    let r = store.append_tweets(&batch).unwrap();
    assert_eq!((r.acknowledged, r.duplicates), (5, 5));
}

#[test]
fn appended_tweets_survive_reopen() {
    let dir = tempfile::tempdir().unwrap();
    {
        let store = Store::open(dir.path()).unwrap();
        store.append_tweets(&tweets("t", 30, StreamKind::Electoral, "a", 22)).unwrap();
        store.append_tweets(&tweets("t", 30, StreamKind::Electoral, "a", 23)).unwrap();
    }
    let store = Store::open(dir.path()).unwrap();
    assert_eq!(store.stored_tweet_count(), 30);
    let all = store.tweets_as_of(far_future()).unwrap();
    assert_eq!(all.len(), 30);
    let r = store.append_tweets(&tweets("t", 30, StreamKind::Electoral, "a", 22)).unwrap();
    assert_eq!(r.acknowledged, 0);
    assert!(dir.path().join("raw/electoral/2018-10-22.ndjson").exists());
}

#[test]
fn as_of_cut_excludes_later_tweets() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    store.append_tweets(&tweets("t", 24, StreamKind::Electoral, "a", 22)).unwrap();
    assert_eq!(store.tweets_as_of(ts(22, 11)).unwrap().len(), 12);
}

#[test]
fn empty_store_builds_an_empty_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    assert!(matches!(store.current_snapshot(), Err(StoreError::WarmingUp)));
    let snap = store.build_snapshot(far_future(), &ScoreTable::new(), 4.0).unwrap();
    assert!(snap.days.is_empty());
    assert_eq!(snap.snapshot_id, 1);
    assert!(snap.recent_timeline(8).is_empty());
}

fn populated() -> (tempfile::TempDir, Store, ScoreTable) {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    for day in 22..26 {
        store.append_tweets(&tweets(&format!("e{day}b"), 6, StreamKind::Electoral, "bot", day)).unwrap();
        store.append_tweets(&tweets(&format!("e{day}h"), 4, StreamKind::Electoral, "human", day)).unwrap();
        store.append_tweets(&tweets(&format!("r{day}"), 5, StreamKind::RandomSample, "r1", day)).unwrap();
        store.append_tweets(&tweets(&format!("s{day}"), 5, StreamKind::RandomSample, "r2", day)).unwrap();
    }
    let scores: ScoreTable = [("bot", 4.5), ("human", 1.0), ("r1", 2.0), ("r2", 1.0)].into_iter().collect();
    (dir, store, scores)
}

#[test]
fn rebuild_is_field_identical_and_ids_increase() {
    let (_dir, store, scores) = populated();
    let a = store.build_snapshot(far_future(), &scores, 4.0).unwrap();
    let b = store.build_snapshot(far_future(), &scores, 4.0).unwrap();
    assert_eq!(a.days, b.days);
    assert_eq!((a.snapshot_id, b.snapshot_id), (1, 2));
    assert_eq!(store.current_snapshot().unwrap().snapshot_id, 2);
    // The holder of snapshot 1 still sees snapshot 1.
    assert_eq!(a.snapshot_id, 1);

    let day = &b.days[&NaiveDate::from_ymd_opt(2018, 10, 22).unwrap()];
    assert!((day.electoral.mean_score - 3.1).abs() < 1e-12);
    assert_eq!(day.baseline.mean_score, 1.5);
    assert!((day.bev.bev.unwrap() - 1.6 / 1.5).abs() < 1e-12);
    let top: Vec<_> = day.tag_cloud.iter().map(|e| (e.value.as_str(), e.weight)).collect();
    assert_eq!(top, [("maga", 6.0), ("@m0", 2.0), ("@m1", 2.0), ("@m2", 2.0)]);
}

#[test]
fn sequential_and_parallel_builds_agree() {
    let (_dir, store, scores) = populated();
    let seq = store.compute_snapshot(far_future(), &scores, 4.0, Execution::Sequential).unwrap();
    let par = store.compute_snapshot(far_future(), &scores, 4.0, Execution::Parallel).unwrap();
    assert_eq!(seq.days, par.days);
}

#[test]
fn resolved_pending_score_enters_next_build() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path()).unwrap());
    store.append_tweets(&tweets("e", 3, StreamKind::Electoral, "late", 22)).unwrap();
    store.append_tweets(&tweets("r", 3, StreamKind::RandomSample, "base", 22)).unwrap();

    let mock = Arc::new(MockBackend::new());
    mock.register("base", 1.0);
    let cfg = ScorerConfig { max_requests_per_day: 1, ..Default::default() };
    let scorer = Scorer::new(cfg, mock.clone()).unwrap().with_persistence(store.clone());
    assert!(matches!(scorer.get_score("base").unwrap(), ScoreOutcome::Resolved(_)));
    assert_eq!(scorer.get_score("late").unwrap(), ScoreOutcome::Pending);

    let day = NaiveDate::from_ymd_opt(2018, 10, 22).unwrap();
    let first = store.build_snapshot(far_future(), &scorer.score_table(), 4.0).unwrap();
    assert_eq!(first.days[&day].electoral.tweet_count, 0);
    assert_eq!(first.days[&day].electoral.pending_count, 3);
    assert!(!first.days[&day].bev.defined.bev);

    // The score arrives later (new quota day, or persisted by another worker).
    mock.register("late", 3.0);
    store.save_score(&bev_core::BotScore {
        account_id: "late".into(),
        score: 3.0,
        fetched_at: Utc::now(),
        source: bev_core::scoring::ScoreSource::Mock,
    })
    .unwrap();
    let table = store.score_table().unwrap();
    let second = store.build_snapshot(far_future(), &table, 4.0).unwrap();
    assert_eq!(second.days[&day].electoral.tweet_count, 3);
    assert_eq!(second.days[&day].bev.bev, Some(2.0));
}

#[test]
fn failed_build_leaves_previous_snapshot_live() {
    let (dir, store, scores) = populated();
    let good = store.build_snapshot(far_future(), &scores, 4.0).unwrap();

    // A directory where a log segment should be makes the read fail.
    std::fs::create_dir(dir.path().join("raw/electoral/2018-10-30.ndjson")).unwrap();
    let err = store.build_snapshot(far_future(), &scores, 4.0).unwrap_err();
    assert!(matches!(err, StoreError::Io(_)), "{err}");
    let current = store.current_snapshot().unwrap();
    assert_eq!(current.snapshot_id, good.snapshot_id);
    assert_eq!(current.days, good.days);

    std::fs::remove_dir(dir.path().join("raw/electoral/2018-10-30.ndjson")).unwrap();
    let next = store.build_snapshot(far_future(), &scores, 4.0).unwrap();
    assert_eq!(next.snapshot_id, good.snapshot_id + 1);
}

#[test]
fn snapshot_and_scores_survive_restart() {
    let (dir, store, scores) = populated();
    store.save_unscorable("ghost").unwrap();
    let snap = store.build_snapshot(far_future(), &scores, 4.0).unwrap();
    drop(store);
    let reopened = Store::open(dir.path()).unwrap();
    let current = reopened.current_snapshot().unwrap();
    assert_eq!(*current, *snap);
    assert_eq!(reopened.persisted_unscorable().unwrap(), ["ghost"]);
    let next = reopened.build_snapshot(far_future(), &scores, 4.0).unwrap();
    assert_eq!(next.snapshot_id, snap.snapshot_id + 1);
}

#[test]
fn prune_drops_old_segments() {
    let (dir, store, _) = populated();
    let removed = store.prune_raw(2, NaiveDate::from_ymd_opt(2018, 10, 25).unwrap()).unwrap();
    assert_eq!(removed, 4);
    assert!(!dir.path().join("raw/electoral/2018-10-23.ndjson").exists());
    assert!(dir.path().join("raw/electoral/2018-10-24.ndjson").exists());
}

#[test]
fn concurrent_builds_are_serialized() {
    let (_dir, store, scores) = populated();
    let store = Arc::new(store);
    let results: Vec<_> = std::thread::scope(|s| {
        let hs: Vec<_> = (0..4)
            .map(|_| {
                let store = store.clone();
                let scores = scores.clone();
                s.spawn(move || store.build_snapshot(far_future(), &scores, 4.0).map(|s| s.snapshot_id))
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let ok: Vec<u64> = results.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    assert!(!ok.is_empty());
    for r in &results {
        if let Err(e) = r {
            assert!(matches!(e, StoreError::BuildInFlight));
        }
    }
    let mut sorted = ok.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), ok.len(), "snapshot ids must be unique");
}
