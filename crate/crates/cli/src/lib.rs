//! `bev`: operator entry points for every pipeline stage.
//!
//! Exit codes: 0 on success, 1 on runtime errors, 2 on usage or
//! configuration errors (including unreadable input files).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use bev_core::expansion::{expand, ExpansionConfig, HashtagSet, Provenance};
use bev_core::ingest::{generate_synthetic, read_archive, synthetic::default_start, StreamKind, SyntheticSpec};
use bev_core::metrics::{format_percentage, BevPoint, DailyAggregate, DateRange};
use bev_core::scoring::DEFAULT_BOT_THRESHOLD;
use bev_core::store::{Snapshot, Store};
use bev_core::Execution;
use bev_server::config::load_population;
use bev_server::ServiceConfig;
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "bev", version, about = "Bot electioneering volume pipeline")]
pub struct Cli {
    /// Output format for command results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Snowball-expand a seed hashtag set over a tweet archive.
    Expand(ExpandArgs),
    /// Drain the configured sources into the store once.
    Ingest(IngestArgs),
    /// Generate seeded electoral and baseline archives.
    Synth(SynthArgs),
    /// Print daily aggregates and BEV values for a date range.
    Compute(ComputeArgs),
    /// Run the pipeline and HTTP API until SIGTERM or Ctrl-C.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    /// Seed hashtags, one per line (or a `.json` set file).
    #[arg(long)]
    pub seeds: PathBuf,
    /// Tweet archive (NDJSON) to measure co-occurrence on.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = ExpansionConfig::default().min_cooccurrence)]
    pub min_cooccurrence: u64,
    #[arg(long, default_value_t = ExpansionConfig::default().min_cooccurrence_rate)]
    pub min_rate: f64,
    #[arg(long, default_value_t = ExpansionConfig::default().max_rounds)]
    pub max_rounds: u32,
    /// Directory for `hashtags.txt` and `hashtags.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Read each source to its end and exit.
    #[arg(long)]
    pub once: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON array of account specs.
    #[arg(long)]
    pub population: PathBuf,
    #[arg(long)]
    pub hours: u32,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = bev_core::ingest::DEFAULT_RATE_LIMIT_RANDOM)]
    pub rate_limit_random: u32,
    /// First hour of the archive (RFC 3339, UTC).
    #[arg(long)]
    pub start: Option<DateTime<Utc>>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("location").required(true).args(["config", "data_dir"])))]
pub struct ComputeArgs {
    /// `YYYY-MM-DD..YYYY-MM-DD` or a single date.
    #[arg(long)]
    pub date_range: String,
    /// Service config supplying `data_dir` and the bot threshold.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Used with `--data-dir`.
    #[arg(long, default_value_t = DEFAULT_BOT_THRESHOLD)]
    pub bot_threshold: f64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `refresh_interval`, e.g. `30s` or `4h`.
    #[arg(long)]
    pub refresh_interval: Option<String>,
    #[arg(long)]
    pub listen: Option<std::net::SocketAddr>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(matches!(cli.command, Command::Serve(_)));
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("bev: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(verbose: bool) {
    let default = if verbose { "info" } else { "warn" };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Expand(a) => cmd_expand(a, cli.format, out),
        Command::Ingest(a) => cmd_ingest(a, cli.format, out),
        Command::Synth(a) => cmd_synth(a, cli.format, out),
        Command::Compute(a) => cmd_compute(a, cli.format, out),
        Command::Serve(a) => cmd_serve(a),
    }
}

fn emit_json(out: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    writeln!(out, "{text}").map_err(runtime)
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} is not a readable file", path.display())))
    }
}

#[derive(Serialize)]
struct ExpandReport<'a> {
    rounds: &'a [Vec<String>],
    empty_corpus: bool,
    corpus_tweets: usize,
    skipped_lines: u64,
    set: &'a HashtagSet,
    files: Vec<PathBuf>,
}

fn cmd_expand(a: &ExpandArgs, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    require_file(&a.seeds, "seeds")?;
    require_file(&a.corpus, "corpus")?;
    let seeds = HashtagSet::load(&a.seeds).map_err(|e| usage(format!("seeds {}: {e}", a.seeds.display())))?;
    let corpus = read_archive(&a.corpus, StreamKind::Electoral)
        .map_err(|e| usage(format!("corpus {}: {e}", a.corpus.display())))?;
    let tweets: Vec<_> = corpus.records.into_iter().map(|(t, _)| t).collect();
    let config = ExpansionConfig {
        min_cooccurrence: a.min_cooccurrence,
        min_cooccurrence_rate: a.min_rate,
        max_rounds: a.max_rounds,
    };
    let outcome = expand(&seeds, &tweets, &config).map_err(usage)?;
    if outcome.empty_corpus {
        eprintln!("bev: warning: corpus {} holds no tweets; seeds returned unchanged", a.corpus.display());
    }
    let files = match &a.out {
        Some(dir) => {
            let (txt, json) = outcome.set.save(dir, "hashtags").map_err(runtime)?;
            vec![txt, json]
        }
        None => Vec::new(),
    };
    match format {
        Format::Json => emit_json(
            out,
            &ExpandReport {
                rounds: &outcome.rounds,
                empty_corpus: outcome.empty_corpus,
                corpus_tweets: tweets.len(),
                skipped_lines: corpus.skipped,
                set: &outcome.set,
                files,
            },
        ),
        Format::Text => {
            let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(runtime);
            w(out, format!("corpus: {} tweets ({} malformed lines skipped)", tweets.len(), corpus.skipped))?;
            for (i, added) in outcome.rounds.iter().enumerate() {
                let round = seeds.entries().iter().map(|e| e.round).max().unwrap_or(0) + 1 + i as u32;
                w(out, format!("round {round}: {}", if added.is_empty() { "-".into() } else { added.join(", ") }))?;
            }
            let count = |p| outcome.set.entries().iter().filter(|e| e.provenance == p).count();
            w(
                out,
                format!(
                    "hashtags: {} ({} seed, {} expanded, {} manual), {} removed",
                    outcome.set.len(),
                    count(Provenance::Seed),
                    count(Provenance::Expanded),
                    count(Provenance::ManualAdd),
                    outcome.set.removed().len()
                ),
            )?;
            if files.is_empty() {
                w(out, outcome.set.to_plain_text().trim_end().to_string())?;
            }
            for f in files {
                w(out, format!("wrote {}", f.display()))?;
            }
            Ok(())
        }
    }
}

fn load_config(path: &Path) -> Result<ServiceConfig, CliError> {
    require_file(path, "config")?;
    ServiceConfig::load(path).map_err(usage)
}

fn cmd_ingest(a: &IngestArgs, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    if !a.once {
        return Err(usage("continuous ingestion runs inside `bev serve`; pass --once for a single pass"));
    }
    let config = load_config(&a.config)?;
    let report = bev_server::ingest_once(&config).map_err(|e| match e {
        bev_server::PipelineError::Config(c) => usage(c),
        bev_server::PipelineError::Source(s) => usage(s),
        other => runtime(other),
    })?;
    match format {
        Format::Json => emit_json(out, &report),
        Format::Text => {
            for s in &report.sources {
                writeln!(
                    out,
                    "{}: read {}, appended {}, duplicates {}, malformed {}, untracked {}, thinned {}{}",
                    s.stream,
                    s.read,
                    s.appended,
                    s.duplicates,
                    s.skipped_malformed,
                    s.filtered_untracked,
                    s.thinned,
                    if s.unconfigured { " (live source unconfigured)" } else { "" }
                )
                .map_err(runtime)?;
            }
            writeln!(
                out,
                "store: {} tweets; scores: {} cached, {} pending, {} unscorable ({} requests)",
                report.stored_tweets, report.scorer.cached, report.scorer.pending, report.scorer.unscorable, report.scorer.requests
            )
            .map_err(runtime)
        }
    }
}

#[derive(Serialize)]
struct SynthReport {
    electoral_path: PathBuf,
    baseline_path: PathBuf,
    electoral_tweets: usize,
    baseline_tweets: usize,
    accounts: usize,
}

fn cmd_synth(a: &SynthArgs, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    require_file(&a.population, "population")?;
    let population = load_population(&a.population).map_err(usage)?;
    let spec = SyntheticSpec::new(population, a.hours, a.seed)
        .starting_at(a.start.unwrap_or_else(default_start))
        .with_rate_limit_random(a.rate_limit_random);
    let archive = generate_synthetic(&spec).map_err(usage)?;
    let [electoral_path, baseline_path] = archive.write_to_dir(&a.out).map_err(runtime)?;
    let report = SynthReport {
        electoral_path,
        baseline_path,
        electoral_tweets: archive.electoral.len(),
        baseline_tweets: archive.baseline.len(),
        accounts: archive.true_scores.len(),
    };
    match format {
        Format::Json => emit_json(out, &report),
        Format::Text => writeln!(
            out,
            "wrote {} electoral tweets to {}\nwrote {} baseline tweets to {}",
            report.electoral_tweets,
            report.electoral_path.display(),
            report.baseline_tweets,
            report.baseline_path.display()
        )
        .map_err(runtime),
    }
}

/// Recomputes every stored day from the raw log and the persisted score
/// cache, exactly as a snapshot build would.
pub fn compute_snapshot(data_dir: &Path, bot_threshold: f64) -> Result<Snapshot, CliError> {
    if !data_dir.is_dir() {
        return Err(runtime(format!("no store at {}", data_dir.display())));
    }
    let store = Store::open(data_dir).map_err(runtime)?;
    let scores = store.score_table().map_err(runtime)?;
    let snapshot = store.compute_snapshot(Utc::now(), &scores, bot_threshold, Execution::Sequential).map_err(runtime)?;
    if snapshot.days.is_empty() {
        return Err(runtime(format!("store at {} is empty; run `bev ingest --once` first", data_dir.display())));
    }
    Ok(snapshot)
}

#[derive(Debug, Serialize)]
pub struct ComputeReport {
    pub aggregates: Vec<DailyAggregate>,
    pub timeline: Vec<BevPoint>,
}

fn cmd_compute(a: &ComputeArgs, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let range: DateRange = a.date_range.parse().map_err(usage)?;
    let (data_dir, threshold) = match (&a.config, &a.data_dir) {
        (Some(path), _) => {
            let cfg = load_config(path)?;
            (cfg.data_dir, cfg.scorer.bot_threshold)
        }
        (None, Some(dir)) => {
            if !(a.bot_threshold > 0.0 && a.bot_threshold < 5.0) {
                return Err(usage("--bot-threshold must lie strictly between 0 and 5"));
            }
            (dir.clone(), a.bot_threshold)
        }
        (None, None) => unreachable!("clap requires one of --config and --data-dir"),
    };
    let snapshot = compute_snapshot(&data_dir, threshold)?;
    let aggregates = snapshot.aggregates();
    let mut report = ComputeReport { aggregates: Vec::new(), timeline: snapshot.timeline(range) };
    for date in range.dates() {
        for stream in StreamKind::ALL {
            report
                .aggregates
                .push(aggregates.get(&(date, stream)).cloned().unwrap_or_else(|| DailyAggregate::empty(date, stream)));
        }
    }
    match format {
        Format::Json => emit_json(out, &report),
        Format::Text => write_compute_table(out, &report).map_err(runtime),
    }
}

fn write_compute_table(out: &mut dyn Write, report: &ComputeReport) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<10}  {:>8} {:>6} {:>6}  {:>8} {:>6} {:>6}  {:>9} {:>9} {:>9}",
        "date", "e.tweets", "e.mean", "e.bots", "r.tweets", "r.mean", "r.bots", "BEV", "BEV.med", "BEV2"
    )?;
    for (point, pair) in report.timeline.iter().zip(report.aggregates.chunks(2)) {
        let (e, r) = (&pair[0], &pair[1]);
        let num = |a: &DailyAggregate, v: f64| if a.empty { "-".to_string() } else { format!("{v:.3}") };
        writeln!(
            out,
            "{:<10}  {:>8} {:>6} {:>6}  {:>8} {:>6} {:>6}  {:>9} {:>9} {:>9}",
            point.date.to_string(),
            e.tweet_count,
            num(e, e.mean_score),
            num(e, e.bot_tweet_proportion),
            r.tweet_count,
            num(r, r.mean_score),
            num(r, r.bot_tweet_proportion),
            format_percentage(point.bev),
            format_percentage(point.bev_median),
            format_percentage(point.bev2),
        )?;
    }
    Ok(())
}

fn cmd_serve(a: &ServeArgs) -> Result<(), CliError> {
    let mut config = load_config(&a.config)?;
    if let Some(raw) = &a.refresh_interval {
        config.refresh_interval = humantime::parse_duration(raw).map_err(|e| usage(format!("--refresh-interval: {e}")))?;
    }
    if let Some(listen) = a.listen {
        config.listen = listen;
    }
    config.validate().map_err(usage)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(runtime)?;
    let result = rt.block_on(bev_server::run(config));
    rt.shutdown_timeout(Duration::from_secs(5));
    result.map_err(|e| match e {
        bev_server::ServiceError::Pipeline(bev_server::PipelineError::Config(c)) => usage(c),
        other => runtime(other),
    })
}
