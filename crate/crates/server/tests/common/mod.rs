#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::Duration;

use bev_core::ingest::{generate_synthetic, AccountSpec, SyntheticArchive, SyntheticSpec};
use bev_server::ServiceConfig;

pub const TEMPLATE: &str = "https://explorer.test/?type={kind}&q={value}";

/// 30 accounts, a third of them bots, over `days` days.
pub fn population() -> Vec<AccountSpec> {
    (0..30)
        .map(|i| {
            let bot = i % 3 == 0;
            AccountSpec::new(format!("acct{i}"), if bot { 4.6 } else { 0.5 + f64::from(i % 5) * 0.6 }, 1.0 + f64::from(i % 3))
                .with_hashtags(if bot { vec!["maga", "vote"] } else { vec!["bluewave", "maga", "cats"] })
                .with_mentions([format!("friend{}", i % 4)])
                .with_links([format!("https://Example.org/p{}?ref=x#frag", i % 5)])
                .electoral(i % 4 != 3)
        })
        .collect()
}

pub fn archive(days: u32) -> SyntheticArchive {
    generate_synthetic(&SyntheticSpec::new(population(), days * 24, 11).with_rate_limit_random(20)).unwrap()
}

/// Writes archives and a track file; returns a config replaying them.
pub fn replay_config(dir: &Path, days: u32) -> ServiceConfig {
    let [electoral, baseline] = archive(days).write_to_dir(dir).unwrap();
    std::fs::write(dir.join("track.txt"), "maga\nbluewave\n").unwrap();
    let text = format!(
        r#"
        refresh_interval = "1h"
        listen = "127.0.0.1:0"
        explorer_url_template = "{TEMPLATE}"
        data_dir = "data"
        track_file = "track.txt"

        [sources.electoral]
        kind = "replay"
        path = "{}"

        [sources.baseline]
        kind = "replay"
        path = "{}"
        rate_limit_random = 20
        "#,
        electoral.display(),
        baseline.display()
    );
    let cfg = ServiceConfig::from_toml(&text, dir, &dir.join("bev.toml")).unwrap();
    cfg.validate().unwrap();
    cfg
}

pub fn with_interval(mut cfg: ServiceConfig, every: Duration) -> ServiceConfig {
    cfg.refresh_interval = every;
    cfg
}

pub fn data_dir(cfg: &ServiceConfig) -> PathBuf {
    cfg.data_dir.clone()
}
