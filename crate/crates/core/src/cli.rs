//! Command-line front end.
//!
//! Exit codes: 0 success, 1 fatal config or I/O error, 2 finished but the
//! rejection rate went over the configured threshold.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::corpus::{load_pa_corpus, load_sa_corpus, write_atomic, write_sa_corpus, Language, LoadOptions};
use crate::eval::{aggregate, ingest_verdicts};
use crate::filters::{FilterPatterns, SnippetFilter};
use crate::lexer::extract_comments;
use crate::llm::{Backend, BackendConfig, CacheMode, HttpBackend, MockBackend, PromptBuilder, PromptTemplates, Secret};
use crate::pipeline::{run_pipeline, PairMode, PipelineConfig};
use crate::schedule::{enumerate_orders, plan, ScheduleOverrides};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FATAL: u8 = 1;
pub const EXIT_DEGRADED: u8 = 2;

const DEFAULT_CACHE_DIR: &str = ".snippet-forge-cache";

#[derive(Debug, Parser)]
#[command(
    name = "snippet-forge",
    version,
    about = "Build snippet-aligned code translation corpora"
)]
pub struct Cli {
    /// TOML or JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    /// Worker threads for the pipeline.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the augmentation pipeline on a PA corpus.
    Augment(AugmentArgs),
    /// Print corpus sizes per language pair and granularity.
    Stats(StatsArgs),
    /// Compute pass@k from execution verdicts.
    Passk(PasskArgs),
    /// Emit a training schedule manifest.
    Plan(PlanArgs),
    /// Check an existing SA corpus against the filters.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// PA corpus, one program per JSONL line.
    #[arg(long)]
    pub input: PathBuf,
    /// Where the SA corpus goes.
    #[arg(long)]
    pub output: PathBuf,
    /// Where the JSON accounting report goes.
    #[arg(long)]
    pub report: PathBuf,
    /// Also write every rejection as JSONL.
    #[arg(long)]
    pub rejections: Option<PathBuf>,
    /// Use the deterministic offline backend.
    #[arg(long)]
    pub mock: bool,
    /// Serve responses from the cache directory where possible.
    #[arg(long)]
    pub resume: bool,
    /// Response cache; defaults to .snippet-forge-cache with --resume.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Chat-completion URL.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub max_concurrent_requests: Option<usize>,
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Language that gets comments first (default python).
    #[arg(long)]
    pub pivot: Option<String>,
    /// `unordered` (default) or `ordered`.
    #[arg(long)]
    pub pair_mode: Option<String>,
    /// Exit with 2 when rejected / initial exceeds this.
    #[arg(long)]
    pub max_rejection_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub corpus: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PasskArgs {
    pub verdicts: PathBuf,
    #[arg(short, long, default_value_t = 1)]
    pub k: u64,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Order string over {P, S}, e.g. PS.
    #[arg(long, required_unless_present = "enumerate")]
    pub order: Option<String>,
    #[arg(long)]
    pub pa: Option<PathBuf>,
    #[arg(long)]
    pub sa: Option<PathBuf>,
    /// List every order up to this many epochs instead.
    #[arg(long)]
    pub enumerate: Option<u32>,
    #[arg(long)]
    pub pa_batch_size: Option<u32>,
    #[arg(long)]
    pub sa_batch_size: Option<u32>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub warmup_ratio: Option<f64>,
    #[arg(long)]
    pub no_lr_restart: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub corpus: PathBuf,
    /// Exit with 2 when violations / records exceeds this.
    #[arg(long)]
    pub max_violation_rate: Option<f64>,
}

/// Settings file. Every field is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub workers: Option<usize>,
    pub pivot: Option<String>,
    pub pair_mode: Option<String>,
    pub max_rejection_rate: Option<f64>,
    pub max_violation_rate: Option<f64>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub max_retries: Option<u32>,
    pub retry_backoff_ms: Option<u64>,
    pub max_concurrent_requests: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    pub filters: Option<FilterPatterns>,
    pub schedule: Option<ScheduleOverrides>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(cfg)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    Ok(())
}

/// Languages listed in the config replace that language's default patterns;
/// the others keep theirs.
fn filter_from(cfg: &FileConfig) -> Result<SnippetFilter> {
    let mut patterns = FilterPatterns::default();
    if let Some(custom) = &cfg.filters {
        patterns.0.extend(custom.0.clone());
    }
    SnippetFilter::new(&patterns).context("compiling filter patterns")
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    let _ = env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .target(env_logger::Target::Stderr)
        .try_init();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FATAL
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let mut cfg = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    match &cli.command {
        Command::Augment(a) => cmd_augment(a, &cfg),
        Command::Stats(a) => cmd_stats(a),
        Command::Passk(a) => cmd_passk(a),
        Command::Plan(a) => cmd_plan(a, &cfg),
        Command::Validate(a) => cmd_validate(a, &cfg),
    }
}

pub fn cmd_augment(args: &AugmentArgs, cfg: &FileConfig) -> Result<u8> {
    let pivot: Language = args
        .pivot
        .as_ref()
        .or(cfg.pivot.as_ref())
        .map_or(Ok(Language::Python), |s| s.parse())?;
    let mode: PairMode = match args.pair_mode.as_ref().or(cfg.pair_mode.as_ref()) {
        Some(s) => s.parse().map_err(anyhow::Error::msg)?,
        None => PairMode::Unordered,
    };
    let threshold = args.max_rejection_rate.or(cfg.max_rejection_rate).unwrap_or(0.05);
    if !(0.0..=1.0).contains(&threshold) {
        bail!("max_rejection_rate must be within [0, 1]");
    }
    let workers = cfg.workers.unwrap_or(4);
    if workers == 0 {
        bail!("workers must be at least 1");
    }

    let mut prompts = PromptBuilder::default();
    if let Some(path) = args.prompts.as_ref().or(cfg.prompts.as_ref()) {
        prompts.templates = PromptTemplates::load(path)?;
    }
    if let Some(m) = args.model.as_ref().or(cfg.model.as_ref()) {
        prompts.model_name = m.clone();
    }
    if let Some(t) = cfg.temperature {
        prompts.temperature = t;
    }
    if let Some(t) = cfg.max_tokens {
        prompts.max_tokens = t;
    }

    let loaded = load_pa_corpus(&args.input, &LoadOptions { pivot })?;
    for e in &loaded.errors {
        log::warn!("{}: {e}", args.input.display());
    }
    log::info!(
        "loaded {} problems ({} groups skipped, {} bad lines)",
        loaded.groups.len(),
        loaded.skipped_groups,
        loaded.errors.len()
    );

    let backend: Box<dyn Backend> = if args.mock {
        Box::new(MockBackend::new())
    } else {
        let defaults = BackendConfig::default();
        let cache_dir = args
            .cache_dir
            .clone()
            .or_else(|| cfg.cache_dir.clone())
            .or_else(|| args.resume.then(|| PathBuf::from(DEFAULT_CACHE_DIR)));
        let config = BackendConfig {
            endpoint_url: args
                .endpoint
                .clone()
                .or_else(|| cfg.endpoint.clone())
                .unwrap_or(defaults.endpoint_url),
            api_key: Secret::default(),
            max_retries: args.max_retries.or(cfg.max_retries).unwrap_or(defaults.max_retries),
            retry_backoff_base: cfg
                .retry_backoff_ms
                .map(Duration::from_millis)
                .unwrap_or(defaults.retry_backoff_base),
            max_concurrent_requests: args
                .max_concurrent_requests
                .or(cfg.max_concurrent_requests)
                .unwrap_or(defaults.max_concurrent_requests),
            cache_dir,
            cache_mode: if args.resume {
                CacheMode::ReadWrite
            } else {
                CacheMode::Refresh
            },
            request_timeout: defaults.request_timeout,
        }
        .with_env_key();
        config.validate().map_err(anyhow::Error::msg)?;
        Box::new(HttpBackend::new(config)?)
    };

    let pipeline = PipelineConfig {
        workers,
        mode,
        prompts,
        filter: filter_from(cfg)?,
    };
    let out = run_pipeline(&loaded.groups, backend.as_ref(), &pipeline);
    let mut report = out.report;
    report.skipped_groups = loaded.skipped_groups as u64;
    report.input_errors = loaded.errors.len() as u64;

    write_sa_corpus(&out.pairs, &args.output)?;
    write_json(&args.report, &report)?;
    if let Some(path) = &args.rejections {
        crate::corpus::write_jsonl_atomic(path, &out.rejections)?;
    }
    eprintln!(
        "initial {} / final {} / usability {:.2}% (parsing {}, comments_not_match {}, filtered {})",
        report.initial_pairs,
        report.final_pairs,
        report.usability_percent(),
        report.rejected.parsing,
        report.rejected.comments_not_match,
        report.rejected.filtered
    );
    Ok(if report.rejection_rate() > threshold {
        EXIT_DEGRADED
    } else {
        EXIT_OK
    })
}

#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize)]
pub struct GranularityStats {
    pub size: u64,
    pub per_language_pair: BTreeMap<String, u64>,
}

#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub size: u64,
    pub granularity: BTreeMap<String, GranularityStats>,
    pub malformed_lines: u64,
}

/// Pairwise sizes of a corpus file. SA lines count one pair each; PA lines
/// are grouped by problem and every two languages of a problem count as one
/// pair.
pub fn corpus_stats(path: &Path) -> Result<CorpusStats> {
    use std::io::BufRead;
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut stats = CorpusStats::default();
    let mut programs: BTreeMap<String, Vec<Language>> = BTreeMap::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(_) => {
                stats.malformed_lines += 1;
                continue;
            }
        };
        let lang = |key: &str| {
            value
                .get(key)
                .and_then(|v| v.as_str())
                .and_then(|s| s.parse::<Language>().ok())
        };
        if let (Some(a), Some(b)) = (lang("lang_a"), lang("lang_b")) {
            let g = stats.granularity.entry("snippet".into()).or_default();
            g.size += 1;
            *g.per_language_pair.entry(format!("{a}-{b}")).or_default() += 1;
        } else if let (Some(l), Some(id)) = (lang("language"), value.get("problem_id").and_then(|v| v.as_str())) {
            programs.entry(id.to_string()).or_default().push(l);
        } else {
            stats.malformed_lines += 1;
        }
    }
    for mut langs in programs.into_values() {
        langs.sort();
        langs.dedup();
        let g = stats.granularity.entry("program".into()).or_default();
        for (a, b) in crate::pipeline::language_pairs(&langs, PairMode::Unordered) {
            g.size += 1;
            *g.per_language_pair.entry(format!("{a}-{b}")).or_default() += 1;
        }
    }
    stats.size = stats.granularity.values().map(|g| g.size).sum();
    Ok(stats)
}

pub fn cmd_stats(args: &StatsArgs) -> Result<u8> {
    let stats = corpus_stats(&args.corpus)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        println!("size {}", stats.size);
        for (name, g) in &stats.granularity {
            println!("{name:<8} {:>10}", g.size);
            for (pair, n) in &g.per_language_pair {
                println!("  {pair:<14} {n:>10}");
            }
        }
        if stats.malformed_lines > 0 {
            println!("malformed lines {}", stats.malformed_lines);
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_passk(args: &PasskArgs) -> Result<u8> {
    let records = ingest_verdicts(&args.verdicts)?;
    let table = aggregate::<f64>(&records, args.k)?;
    let rendered = if args.json {
        serde_json::to_string_pretty(&table)? + "\n"
    } else {
        table.render_text()
    };
    match &args.output {
        Some(path) => write_atomic(path, |w| Ok(w.write_all(rendered.as_bytes())?))?,
        None => print!("{rendered}"),
    }
    Ok(EXIT_OK)
}

pub fn cmd_plan(args: &PlanArgs, cfg: &FileConfig) -> Result<u8> {
    if let Some(max) = args.enumerate {
        for order in enumerate_orders(max)? {
            println!("{order}");
        }
        return Ok(EXIT_OK);
    }
    let mut overrides = cfg.schedule.clone().unwrap_or_default();
    overrides.pa_batch_size = args.pa_batch_size.or(overrides.pa_batch_size);
    overrides.sa_batch_size = args.sa_batch_size.or(overrides.sa_batch_size);
    overrides.learning_rate = args.learning_rate.or(overrides.learning_rate);
    overrides.warmup_ratio = args.warmup_ratio.or(overrides.warmup_ratio);
    if args.no_lr_restart {
        overrides.lr_restart = Some(false);
    }
    let order = args.order.as_deref().unwrap_or_default();
    let manifest = plan(order, args.pa.clone(), args.sa.clone(), &overrides)?;
    match &args.output {
        Some(path) => write_json(path, &manifest)?,
        None => println!("{}", manifest.to_json()),
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationSummary {
    pub records: u64,
    pub malformed_lines: u64,
    pub same_language: u64,
    pub useless_snippet: u64,
    pub embedded_comment: u64,
    pub lex_error: u64,
    pub duplicate_key: u64,
    pub violating_records: u64,
}

/// Re-checks an SA corpus: language pairs must differ, both snippets must
/// pass the filters, snippets must lex and contain no comments, and
/// (problem, lang_a, lang_b, index) must be unique.
pub fn validate_sa_corpus(path: &Path, filter: &SnippetFilter) -> Result<ValidationSummary> {
    let (pairs, errors) = load_sa_corpus(path)?;
    let mut s = ValidationSummary {
        records: pairs.len() as u64,
        malformed_lines: errors.len() as u64,
        ..Default::default()
    };
    let mut seen = std::collections::HashSet::new();
    for p in &pairs {
        let mut bad = false;
        if p.lang_a == p.lang_b {
            s.same_language += 1;
            bad = true;
        }
        if !filter.is_useless_snippet(&p.snippet_a, p.lang_a).accepted
            || !filter.is_useless_snippet(&p.snippet_b, p.lang_b).accepted
        {
            s.useless_snippet += 1;
            bad = true;
        }
        let mut lex_failed = false;
        let mut has_comment = false;
        for (text, lang) in [(&p.snippet_a, p.lang_a), (&p.snippet_b, p.lang_b)] {
            match extract_comments(&crate::corpus::Program::new(&p.problem_id, lang, text.as_str())) {
                Ok(c) => has_comment |= !c.is_empty(),
                Err(_) => lex_failed = true,
            }
        }
        if lex_failed {
            s.lex_error += 1;
            bad = true;
        }
        if has_comment {
            s.embedded_comment += 1;
            bad = true;
        }
        if !seen.insert((p.problem_id.as_str(), p.lang_a, p.lang_b, p.snippet_index)) {
            s.duplicate_key += 1;
            bad = true;
        }
        s.violating_records += u64::from(bad);
    }
    Ok(s)
}

pub fn cmd_validate(args: &ValidateArgs, cfg: &FileConfig) -> Result<u8> {
    let summary = validate_sa_corpus(&args.corpus, &filter_from(cfg)?)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    let threshold = args.max_violation_rate.or(cfg.max_violation_rate).unwrap_or(0.0);
    let total = summary.records + summary.malformed_lines;
    let bad = summary.violating_records + summary.malformed_lines;
    let rate = if total == 0 { 0.0 } else { bad as f64 / total as f64 };
    Ok(if rate > threshold { EXIT_DEGRADED } else { EXIT_OK })
}
