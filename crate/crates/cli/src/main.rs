mod commands;
mod settings;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::{Settings, SweepParam};

/// Federated pseudo-relevance feedback over time-stamped vertical indexes.
#[derive(Debug, Parser)]
#[command(name = "prvf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Index the news corpus into verticals, and the target and external corpora.
    Index,
    /// Sample the centralized sample index from the news verticals.
    Csi,
    /// Collect per-vertical term statistics for Taily selection.
    TailyStats,
    /// Expand one query and print selection, expansion model, feedback and costs as JSON.
    Expand(QueryArgs),
    /// Expand one query and print its final ranking in run format.
    Search {
        #[command(flatten)]
        query: QueryArgs,
        /// Rows to print.
        #[arg(long, default_value_t = 10)]
        hits: usize,
    },
    /// Run methods over a topic set and write runs and reports.
    Evaluate {
        /// Sweep this window axis even with a single value.
        #[arg(long, value_enum)]
        sweep: Option<SweepParam>,
    },
    /// Print the effective configuration as TOML.
    Config,
    /// Write a synthetic benchmark (corpora, vertical config, topics, qrels).
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    query: String,
    /// Issue time in epoch seconds; defaults to now.
    #[arg(long)]
    timestamp: Option<u64>,
    /// One method; a bare `prvf` uses --selector.
    #[arg(long, default_value = "prvf")]
    method: String,
    /// Topic id printed in run rows.
    #[arg(long, default_value = "query")]
    topic: String,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value_t = commands::SynthKind::Standard)]
    kind: commands::SynthKind,
    #[arg(long, default_value_t = 2013)]
    seed: u64,
    #[arg(long)]
    news_docs: Option<usize>,
    #[arg(long)]
    tweets: Option<usize>,
    #[arg(long)]
    external_docs: Option<usize>,
    #[arg(long)]
    num_topics: Option<usize>,
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Debug, Args)]
struct Overrides {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Output directory holding indexes/, runs/ and reports/.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// News corpus (JSON lines) split into verticals.
    #[arg(long, global = true)]
    news: Option<PathBuf>,
    /// Vertical config JSON mapping verticals to sources.
    #[arg(long, global = true)]
    verticals: Option<PathBuf>,
    /// Target corpus (JSON lines) that final rankings come from.
    #[arg(long, global = true)]
    target: Option<PathBuf>,
    /// Static external expansion corpus (JSON lines).
    #[arg(long, global = true)]
    external: Option<PathBuf>,
    #[arg(long, global = true)]
    topics: Option<PathBuf>,
    #[arg(long, global = true)]
    qrels: Option<PathBuf>,

    #[arg(long, global = true)]
    fb_docs: Option<usize>,
    #[arg(long, global = true)]
    terms: Option<usize>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    #[arg(long, global = true)]
    external_fb_docs: Option<usize>,
    #[arg(long, global = true)]
    depth: Option<usize>,

    #[arg(long, global = true)]
    csi_rate: Option<f64>,
    #[arg(long, global = true)]
    csi_seed: Option<u64>,

    /// Selector for a bare `prvf`: crcs1, crcs2, crcs3, ranks, taily.
    #[arg(long, global = true)]
    selector: Option<String>,
    #[arg(long, global = true)]
    crcs_gamma: Option<usize>,
    #[arg(long, global = true)]
    ranks_base: Option<f64>,
    #[arg(long, global = true)]
    ranks_threshold: Option<f64>,
    #[arg(long, global = true)]
    ranks_gamma: Option<usize>,
    #[arg(long, global = true)]
    taily_n: Option<f64>,
    #[arg(long, global = true)]
    taily_v: Option<f64>,

    /// Corpus age in seconds; a comma list sweeps it.
    #[arg(long, global = true, value_delimiter = ',')]
    age_seconds: Option<Vec<u64>>,
    /// Corpus time span in seconds; a comma list sweeps it.
    #[arg(long, global = true, value_delimiter = ',')]
    span_seconds: Option<Vec<u64>>,

    /// Comma-separated methods: no-prf, prf, prf.news, prf.wiki, clrm, prvf, prvf(crcs2), ...
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Method the cost changes are reported against.
    #[arg(long, global = true)]
    baseline: Option<String>,
}

impl Overrides {
    fn apply(self, s: &mut Settings) {
        fn set<T>(slot: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *slot = v;
            }
        }
        set(&mut s.paths.out, self.out);
        let p = &mut s.paths;
        for (slot, v) in [
            (&mut p.news, self.news),
            (&mut p.verticals, self.verticals),
            (&mut p.target, self.target),
            (&mut p.external, self.external),
            (&mut p.topics, self.topics),
            (&mut p.qrels, self.qrels),
        ] {
            if v.is_some() {
                *slot = v;
            }
        }
        let e = &mut s.expansion;
        set(&mut e.fb_docs, self.fb_docs);
        set(&mut e.terms, self.terms);
        set(&mut e.lambda, self.lambda);
        set(&mut e.mu, self.mu);
        set(&mut e.external_fb_docs, self.external_fb_docs);
        set(&mut e.depth, self.depth);
        set(&mut s.csi.rate, self.csi_rate);
        set(&mut s.csi.seed, self.csi_seed);
        set(&mut s.evaluate.selector, self.selector);
        set(&mut s.crcs.gamma, self.crcs_gamma);
        set(&mut s.ranks.base, self.ranks_base);
        set(&mut s.ranks.threshold, self.ranks_threshold);
        set(&mut s.ranks.gamma, self.ranks_gamma);
        set(&mut s.taily.n, self.taily_n);
        set(&mut s.taily.v, self.taily_v);
        set(&mut s.window.age_seconds, self.age_seconds);
        set(&mut s.window.span_seconds, self.span_seconds);
        set(&mut s.evaluate.methods, self.methods);
        set(&mut s.evaluate.baseline, self.baseline);
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let line = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            report("usage", line);
            return ExitCode::from(2);
        }
    };
    let level = match cli.opts.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if closed_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            report(error_kind(&e), &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut settings = Settings::load(cli.opts.config.as_deref())?;
    cli.opts.apply(&mut settings);
    match cli.command {
        Command::Index => commands::index(&settings),
        Command::Csi => commands::csi(&settings),
        Command::TailyStats => commands::taily_stats(&settings),
        Command::Expand(q) => commands::expand(&settings, &q.query, q.timestamp, &q.method),
        Command::Search { query: q, hits } => commands::search(&settings, &q.query, q.timestamp, &q.method, &q.topic, hits),
        Command::Evaluate { sweep } => commands::evaluate(&settings, sweep),
        Command::Config => {
            write!(std::io::stdout().lock(), "{}", settings.to_toml()?)?;
            Ok(())
        }
        Command::Synth(a) => commands::synth(
            &settings,
            &commands::SynthOptions {
                kind: a.kind,
                seed: a.seed,
                news_docs: a.news_docs,
                tweets: a.tweets,
                external_docs: a.external_docs,
                topics: a.num_topics,
            },
        ),
    }
}

fn closed_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe))
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    use prvf_core::Error as E;
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<E>() {
            return match err {
                E::Io { .. } => "io",
                E::MalformedLine { .. } | E::Parse(..) | E::Json(_) | E::Csv(_) => "parse",
                E::DuplicateId(_) => "duplicate_id",
                E::UnmappedSource(_) => "unmapped_source",
                E::InvalidConfig(_) => "invalid_config",
                E::EmptyQuery => "empty_query",
                E::InvalidParam(_) => "invalid_param",
                E::MissingInput(_) => "missing_input",
                E::Format(_) => "format",
                _ => "internal",
            };
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
        if cause.is::<toml::de::Error>() {
            return "invalid_config";
        }
    }
    "failed"
}

/// One JSON line on stderr.
fn report(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message.replace('\n', " ") });
    eprintln!("{line}");
}
