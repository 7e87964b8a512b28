use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use bev_core::ingest::write_archive;
use bev_core::{StreamKind, Tweet};
use chrono::{TimeZone, Utc};
use serde_json::Value;

fn bev(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bev")).args(args).env_remove("RUST_LOG").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tweet(id: &str, author: &str, day: u32, stream: StreamKind, tags: &[&str]) -> Tweet {
    Tweet::new(id, author, Utc.with_ymd_and_hms(2018, 10, day, 12, 0, 0).unwrap(), stream).with_hashtags(tags.iter().copied())
}

/// Day 22: the worked example (S_e = 3.1, S_r = 1.5). Day 23: identical
/// streams. Day 24: electoral only.
fn write_fixture(dir: &Path) -> PathBuf {
    let mut electoral: Vec<(Tweet, Option<f64>)> = Vec::new();
    let mut baseline: Vec<(Tweet, Option<f64>)> = Vec::new();
    for i in 0..6 {
        electoral.push((tweet(&format!("e22b{i}"), "bot", 22, StreamKind::Electoral, &["maga"]), Some(4.5)));
    }
    for i in 0..4 {
        electoral.push((tweet(&format!("e22h{i}"), "human", 22, StreamKind::Electoral, &["vote", "maga"]), Some(1.0)));
    }
    for i in 0..5 {
        baseline.push((tweet(&format!("r22a{i}"), "r1", 22, StreamKind::RandomSample, &[]), Some(2.0)));
        baseline.push((tweet(&format!("r22b{i}"), "r2", 22, StreamKind::RandomSample, &[]), Some(1.0)));
    }
    for i in 0..3 {
        electoral.push((tweet(&format!("e23{i}"), "same", 23, StreamKind::Electoral, &["maga"]), Some(1.2)));
        baseline.push((tweet(&format!("r23{i}"), "same", 23, StreamKind::RandomSample, &[]), Some(1.2)));
    }
    electoral.push((tweet("e24", "human", 24, StreamKind::Electoral, &["maga"]), Some(1.0)));
    // Untracked: filtered at ingest.
    electoral.push((tweet("e24x", "human", 24, StreamKind::Electoral, &["cats"]), Some(1.0)));

    let write = |name: &str, rows: &[(Tweet, Option<f64>)]| {
        let path = dir.join(name);
        write_archive(&path, rows.iter().map(|(t, s)| (t, *s))).unwrap();
        path
    };
    let e = write("electoral.ndjson", &electoral);
    let b = write("baseline.ndjson", &baseline);
    std::fs::write(dir.join("track.txt"), "maga\n").unwrap();
    let config = dir.join("bev.toml");
    std::fs::write(
        &config,
        format!(
            "listen = \"127.0.0.1:0\"\ntrack_file = \"track.txt\"\ndata_dir = \"data\"\n\n\
             [sources.electoral]\nkind = \"replay\"\npath = \"{}\"\n\n\
             [sources.baseline]\nkind = \"replay\"\npath = \"{}\"\n",
            p(&e),
            p(&b)
        ),
    )
    .unwrap();
    config
}

#[test]
fn compute_renders_the_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path());
    let ingest = bev(&["ingest", "--config", p(&config), "--once"]);
    assert!(ingest.status.success(), "{}", String::from_utf8_lossy(&ingest.stderr));
    let text = stdout(&ingest);
    assert!(text.contains("electoral: read 14, appended 14"), "{text}");
    assert!(text.contains("untracked 1"), "{text}");

    let out = bev(&["compute", "--config", p(&config), "--date-range", "2018-10-22..2018-10-25"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<String> = stdout(&out).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("2018-10-22") && lines[1].contains("+106.7%"), "{}", lines[1]);
    assert!(lines[2].starts_with("2018-10-23") && lines[2].contains("+0.0%"), "{}", lines[2]);
    assert!(lines[3].starts_with("2018-10-24") && lines[3].contains("n/a"), "{}", lines[3]);
    assert!(lines[4].starts_with("2018-10-25") && lines[4].contains("n/a"), "{}", lines[4]);

    let json = bev(&["--format", "json", "compute", "--data-dir", p(&dir.path().join("data")), "--date-range", "2018-10-22"]);
    let v: Value = serde_json::from_slice(&json.stdout).unwrap();
    assert!((v["timeline"][0]["bev"].as_f64().unwrap() - 1.6 / 1.5).abs() < 1e-12);
    assert_eq!(v["aggregates"][0]["mean_score"].as_f64().unwrap(), 3.1);
    assert_eq!(v["aggregates"][1]["mean_score"].as_f64().unwrap(), 1.5);

    // Re-ingesting the same archives appends nothing.
    let again = bev(&["--format", "json", "ingest", "--config", p(&config), "--once"]);
    let v: Value = serde_json::from_slice(&again.stdout).unwrap();
    assert_eq!(v["sources"][0]["appended"], 0);
    assert_eq!(v["sources"][0]["duplicates"], 14);
}

#[test]
fn compute_on_empty_store_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bev(&["compute", "--data-dir", p(dir.path()), "--date-range", "2018-10-22..2018-10-23"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
    let out = bev(&["compute", "--data-dir", p(&dir.path().join("nope")), "--date-range", "2018-10-22"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    for args in [
        vec!["expand", "--seeds", p(&missing), "--corpus", p(&missing)],
        vec!["compute", "--data-dir", p(dir.path()), "--date-range", "2018-10-23..2018-10-22"],
        vec!["compute", "--date-range", "2018-10-22"],
        vec!["ingest", "--config", p(&missing), "--once"],
        vec!["serve", "--config", p(&missing)],
        vec!["synth", "--population", p(&missing), "--hours", "1", "--seed", "1"],
        vec!["frobnicate"],
    ] {
        assert_eq!(bev(&args).status.code(), Some(2), "{args:?}");
    }
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "timeline_days = 0\n").unwrap();
    assert_eq!(bev(&["ingest", "--config", p(&bad), "--once"]).status.code(), Some(2));
    let config = write_fixture(dir.path());
    assert_eq!(bev(&["ingest", "--config", p(&config)]).status.code(), Some(2));
    assert_eq!(bev(&["--help"]).status.code(), Some(0));
}

#[test]
fn expand_reports_rounds_and_writes_sets() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = Vec::new();
    let mut add = |n: usize, tags: &[&str]| {
        for _ in 0..n {
            let id = rows.len().to_string();
            rows.push(tweet(&id, "u", 22, StreamKind::Electoral, tags));
        }
    };
    add(12, &["2018midterms", "a"]);
    add(12, &["a", "b"]);
    add(10, &["b", "c"]);
    add(4, &["c"]);
    add(15, &["2018midterms", "noise"]);
    add(60, &["noise"]);
    let corpus = dir.path().join("corpus.ndjson");
    write_archive(&corpus, rows.iter().map(|t| (t, None))).unwrap();
    let seeds = dir.path().join("seeds.txt");
    std::fs::write(&seeds, "2018midterms\n").unwrap();
    let out_dir = dir.path().join("out");

    let out = bev(&["expand", "--seeds", p(&seeds), "--corpus", p(&corpus), "--out", p(&out_dir)]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("round 1: a\n") && text.contains("round 2: b\n") && text.contains("round 3: c\n"), "{text}");
    let saved = std::fs::read_to_string(out_dir.join("hashtags.txt")).unwrap();
    assert!(saved.contains("c") && !saved.contains("noise"));
    assert!(out_dir.join("hashtags.json").exists());

    let out = bev(&["--format", "json", "expand", "--seeds", p(&seeds), "--corpus", p(&corpus), "--max-rounds", "1"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rounds"], serde_json::json!([["a"]]));

    let empty = dir.path().join("empty.ndjson");
    std::fs::write(&empty, "").unwrap();
    let out = bev(&["expand", "--seeds", p(&seeds), "--corpus", p(&empty)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(stdout(&out).contains("2018midterms"));
}

#[test]
fn synth_is_exact_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let pop = dir.path().join("pop.json");
    std::fs::write(&pop, r#"[{"account_id": "a1", "true_score": 4.2, "tweets_per_hour": 2, "hashtags": ["maga"]}]"#).unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let o = bev(&["--format", "json", "synth", "--population", p(&pop), "--hours", "1", "--seed", "5", "--out", p(out), "--rate-limit-random", "3"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["electoral_tweets"], 2);
        assert_eq!(v["baseline_tweets"], 3);
    }
    for name in ["electoral.ndjson", "random_sample.ndjson"] {
        assert_eq!(std::fs::read(out_a.join(name)).unwrap(), std::fs::read(out_b.join(name)).unwrap());
    }
    std::fs::write(&pop, r#"[{"account_id": "a1", "true_score": 7, "tweets_per_hour": 2}]"#).unwrap();
    assert_eq!(bev(&["synth", "--population", p(&pop), "--hours", "1", "--seed", "5", "--out", p(&out_a)]).status.code(), Some(2));
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn snapshot_id(port: u16) -> Option<u64> {
    let body: Value = reqwest::blocking::get(format!("http://127.0.0.1:{port}/api/health")).ok()?.json().ok()?;
    body["snapshot_id"].as_u64()
}

#[test]
fn serve_honors_overrides_and_exits_cleanly_on_sigterm() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path());
    let port = free_port();
    let listen = format!("127.0.0.1:{port}");
    let mut child = Command::new(env!("CARGO_BIN_EXE_bev"))
        .args(["serve", "--config", p(&config), "--refresh-interval", "300ms", "--listen", &listen])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();

    let deadline = Instant::now() + Duration::from_secs(20);
    let mut seen = Vec::new();
    while Instant::now() < deadline && seen.len() < 3 {
        if let Some(id) = snapshot_id(port) {
            if seen.last() != Some(&id) {
                seen.push(id);
            }
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    assert!(seen.len() >= 3, "snapshot ids {seen:?}");

    // A second server on the same port fails at startup.
    let busy = bev(&["serve", "--config", p(&config), "--listen", &listen]);
    assert_eq!(busy.status.code(), Some(1));

    let killed = Command::new("kill").args(["-TERM", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    let deadline = Instant::now() + Duration::from_secs(15);
    let status = loop {
        if let Some(s) = child.try_wait().unwrap() {
            break s;
        }
        assert!(Instant::now() < deadline, "serve did not exit after SIGTERM");
        std::thread::sleep(Duration::from_millis(50));
    };
    assert_eq!(status.code(), Some(0));
}
