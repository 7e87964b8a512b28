//! Service configuration: a TOML file plus `BEV_*` environment overrides.
//!
//! Relative paths in the file are resolved against the file's directory.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use bev_core::expansion::HashtagSet;
use bev_core::ingest::{AccountSpec, SourceConfig, SourceKind, StreamKind, DEFAULT_RATE_LIMIT_RANDOM};
use bev_core::metrics::DEFAULT_TIMELINE_DAYS;
use bev_core::scoring::{ScorerConfig, DEFAULT_BOT_THRESHOLD, DEFAULT_CACHE_TTL};
use chrono::{DateTime, Utc};
use serde::Deserialize;

/// Prefix for environment overrides, e.g. `BEV_LISTEN` or `BEV_SCORER_ENDPOINT`.
pub const ENV_PREFIX: &str = "BEV_";

pub const DEFAULT_REFRESH_INTERVAL: Duration = Duration::from_secs(4 * 3600);
pub const DEFAULT_EXPLORER_URL_TEMPLATE: &str = "https://hoaxy.osome.iu.edu/#query={value}&type={kind}";
pub const MAX_TIMELINE_DAYS: u32 = 366;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for {key}: {message}")]
    Override { key: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

mod duration_text {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let text = String::deserialize(d)?;
        humantime::parse_duration(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKindName {
    Replay,
    Synthetic,
    LiveStub,
}

/// One `[sources.<stream>]` table.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub kind: SourceKindName,
    /// Replay archive.
    pub path: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Synthetic population: a JSON array of account specs.
    pub population: Option<PathBuf>,
    pub hours: Option<u32>,
    pub start: Option<DateTime<Utc>>,
    pub rate_limit_random: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesSection {
    pub electoral: Option<SourceSection>,
    pub baseline: Option<SourceSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerSection {
    /// Empty selects the mock scorer fed from fixture ground truth.
    pub endpoint: String,
    #[serde(with = "duration_text")]
    pub cache_ttl: Duration,
    pub max_requests_per_day: u32,
    pub bot_threshold: f64,
    #[serde(with = "duration_text")]
    pub timeout: Duration,
}

impl Default for ScorerSection {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            cache_ttl: DEFAULT_CACHE_TTL,
            max_requests_per_day: ScorerConfig::default().max_requests_per_day,
            bot_threshold: DEFAULT_BOT_THRESHOLD,
            timeout: Duration::from_secs(10),
        }
    }
}

impl ScorerSection {
    pub fn scorer_config(&self) -> ScorerConfig {
        ScorerConfig {
            endpoint: self.endpoint.clone(),
            cache_ttl: self.cache_ttl,
            max_requests_per_day: self.max_requests_per_day,
            bot_threshold: self.bot_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    #[serde(with = "duration_text")]
    pub refresh_interval: Duration,
    pub timeline_days: u32,
    pub listen: SocketAddr,
    pub explorer_url_template: String,
    pub data_dir: PathBuf,
    pub track_file: Option<PathBuf>,
    pub scorer: ScorerSection,
    pub sources: SourcesSection,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            refresh_interval: DEFAULT_REFRESH_INTERVAL,
            timeline_days: DEFAULT_TIMELINE_DAYS,
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            explorer_url_template: DEFAULT_EXPLORER_URL_TEMPLATE.to_string(),
            data_dir: PathBuf::from("data"),
            track_file: None,
            scorer: ScorerSection::default(),
            sources: SourcesSection::default(),
        }
    }
}

fn absolutize(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ServiceConfig {
    /// Parses TOML text. Relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path, origin: &Path) -> Result<Self, ConfigError> {
        let mut cfg: ServiceConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Reads the file, applies process environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml(&text, base, path)?;
        cfg.apply_overrides(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        absolutize(base, &mut self.data_dir);
        if let Some(p) = &mut self.track_file {
            absolutize(base, p);
        }
        for s in [&mut self.sources.electoral, &mut self.sources.baseline].into_iter().flatten() {
            if let Some(p) = &mut s.path {
                absolutize(base, p);
            }
            if let Some(p) = &mut s.population {
                absolutize(base, p);
            }
        }
    }

    /// Applies `BEV_*` variables. Unknown `BEV_*` names are ignored.
    pub fn apply_overrides<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (key, value) in vars {
            let (key, value) = (key.as_ref(), value.as_ref());
            let Some(name) = key.strip_prefix(ENV_PREFIX) else { continue };
            let bad = |message: String| ConfigError::Override { key: key.to_string(), message };
            let duration = |v: &str| humantime::parse_duration(v).map_err(|e| bad(e.to_string()));
            match name {
                "REFRESH_INTERVAL" => self.refresh_interval = duration(value)?,
                "TIMELINE_DAYS" => self.timeline_days = value.parse().map_err(|e| bad(format!("{e}")))?,
                "LISTEN" => self.listen = value.parse().map_err(|e| bad(format!("{e}")))?,
                "EXPLORER_URL_TEMPLATE" => self.explorer_url_template = value.to_string(),
                "DATA_DIR" => self.data_dir = PathBuf::from(value),
                "TRACK_FILE" => self.track_file = Some(PathBuf::from(value)),
                "SCORER_ENDPOINT" => self.scorer.endpoint = value.to_string(),
                "SCORER_CACHE_TTL" => self.scorer.cache_ttl = duration(value)?,
                "SCORER_TIMEOUT" => self.scorer.timeout = duration(value)?,
                "SCORER_MAX_REQUESTS_PER_DAY" => {
                    self.scorer.max_requests_per_day = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                "SCORER_BOT_THRESHOLD" => self.scorer.bot_threshold = value.parse().map_err(|e| bad(format!("{e}")))?,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.refresh_interval.is_zero() {
            return Err(ConfigError::Invalid("refresh_interval must be positive".into()));
        }
        if !(1..=MAX_TIMELINE_DAYS).contains(&self.timeline_days) {
            return Err(ConfigError::Invalid(format!("timeline_days must lie in 1..={MAX_TIMELINE_DAYS}")));
        }
        for placeholder in ["{kind}", "{value}"] {
            if !self.explorer_url_template.contains(placeholder) {
                return Err(ConfigError::Invalid(format!("explorer_url_template lacks {placeholder}")));
            }
        }
        if self.scorer.timeout.is_zero() {
            return Err(ConfigError::Invalid("scorer.timeout must be positive".into()));
        }
        self.scorer.scorer_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (name, section) in self.source_sections() {
            match section.kind {
                SourceKindName::Replay if section.path.is_none() => {
                    return Err(ConfigError::Invalid(format!("sources.{name}: replay needs `path`")))
                }
                SourceKindName::Synthetic if section.population.is_none() || section.hours.is_none() => {
                    return Err(ConfigError::Invalid(format!("sources.{name}: synthetic needs `population` and `hours`")))
                }
                _ => {}
            }
            if section.rate_limit_random == Some(0) {
                return Err(ConfigError::Invalid(format!("sources.{name}: rate_limit_random must be positive")));
            }
        }
        Ok(())
    }

    fn source_sections(&self) -> impl Iterator<Item = (&'static str, &SourceSection)> {
        [("electoral", &self.sources.electoral), ("baseline", &self.sources.baseline)]
            .into_iter()
            .filter_map(|(n, s)| s.as_ref().map(|s| (n, s)))
    }

    pub fn load_track(&self) -> Result<Option<HashtagSet>, ConfigError> {
        let Some(path) = &self.track_file else { return Ok(None) };
        HashtagSet::load(path).map(Some).map_err(|e| ConfigError::Invalid(format!("track_file {}: {e}", path.display())))
    }

    /// Turns the `[sources]` tables into source configs, loading the track
    /// and any population files.
    pub fn source_configs(&self) -> Result<Vec<SourceConfig>, ConfigError> {
        let track = self.load_track()?;
        let mut out = Vec::new();
        for (stream, section) in [
            (StreamKind::Electoral, &self.sources.electoral),
            (StreamKind::RandomSample, &self.sources.baseline),
        ] {
            let Some(section) = section else { continue };
            let kind = match section.kind {
                SourceKindName::LiveStub => SourceKind::LiveStub,
                SourceKindName::Replay => SourceKind::Replay { path: section.path.clone().unwrap_or_default() },
                SourceKindName::Synthetic => SourceKind::Synthetic {
                    seed: section.seed.unwrap_or(0),
                    population: load_population(section.population.as_deref().unwrap_or(Path::new("")))?,
                    hours: section.hours.unwrap_or(0),
                    start: section.start.unwrap_or_else(bev_core::ingest::synthetic::default_start),
                },
            };
            let mut cfg = SourceConfig {
                kind,
                stream,
                rate_limit_random: section.rate_limit_random.unwrap_or(DEFAULT_RATE_LIMIT_RANDOM),
                track: None,
            };
            if stream == StreamKind::Electoral {
                cfg.track = track.clone();
            }
            cfg.validate().map_err(|e| ConfigError::Invalid(format!("sources.{stream}: {e}")))?;
            out.push(cfg);
        }
        Ok(out)
    }
}

/// Reads a JSON array of account specs.
pub fn load_population(path: &Path) -> Result<Vec<AccountSpec>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })
}
