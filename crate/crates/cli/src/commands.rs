use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use log::{info, warn};
use prvf_core::eval::{read_topics, run_experiment, run_sweep, trace_query, write_sweep_csv, ExperimentOutput, SweepRow};
use prvf_core::federation::{CSI_FILE, TAILY_FILE};
use prvf_core::synthetic::{benchmark, BenchmarkSpec};
use prvf_core::{
    build_csi, build_index, read_corpus, taily_build, Csi, Error, ExperimentConfig, ExperimentInputs, InvertedIndex, Method,
    Qrels, RunFile, Selector, TailyStats, VerticalConfig, VerticalSet,
};
use serde_json::json;

use crate::settings::{Settings, SweepParam};

fn corpus(path: &Path) -> Result<Vec<prvf_core::Document>> {
    read_corpus(path).with_context(|| format!("reading corpus {}", path.display()))
}

pub fn index(s: &Settings) -> Result<()> {
    let p = &s.paths;
    if p.news.is_none() && p.target.is_none() && p.external.is_none() {
        return Err(Error::MissingInput("nothing to index: pass --news, --target or --external".into()).into());
    }
    if let Some(news) = &p.news {
        let cfg_path = p
            .verticals
            .as_ref()
            .ok_or_else(|| Error::MissingInput("--verticals config for the news corpus".into()))?;
        let cfg = VerticalConfig::from_path(cfg_path).with_context(|| format!("reading {}", cfg_path.display()))?;
        let vs = VerticalSet::build(corpus(news)?, &cfg)?;
        let dir = s.news_dir();
        vs.save(&dir)?;
        for stale in [CSI_FILE, TAILY_FILE] {
            let f = dir.join(stale);
            if f.exists() {
                warn!("removing {} built from the previous news index", f.display());
                fs::remove_file(&f).with_context(|| format!("removing {}", f.display()))?;
            }
        }
        println!("news: {} docs in {} verticals -> {}", vs.num_docs(), vs.len(), dir.display());
        for v in vs.verticals() {
            println!("  {:<16} {}", v.name, v.index.num_docs());
        }
    }
    for (label, src, dst) in [("target", &p.target, s.target_index()), ("external", &p.external, s.external_index())] {
        if let Some(src) = src {
            let idx = build_index(corpus(src)?)?;
            fs::create_dir_all(s.indexes()).with_context(|| format!("creating {}", s.indexes().display()))?;
            idx.save(&dst)?;
            println!("{label}: {} docs -> {}", idx.num_docs(), dst.display());
        }
    }
    Ok(())
}

fn load_news(s: &Settings) -> Result<VerticalSet> {
    let dir = s.news_dir();
    if !dir.exists() {
        return Err(Error::MissingInput(format!("news verticals at {} (run `prvf index --news ...`)", dir.display())).into());
    }
    Ok(VerticalSet::load(&dir)?)
}

pub fn csi(s: &Settings) -> Result<()> {
    let vs = load_news(s)?;
    let csi = build_csi(&vs, s.csi.rate, s.csi.seed)?;
    let path = s.news_dir().join(CSI_FILE);
    csi.save(&path)?;
    println!("csi: {} of {} docs (rate {}, seed {}) -> {}", csi.len(), vs.num_docs(), s.csi.rate, s.csi.seed, path.display());
    for ((name, n), total) in csi.vertical_names().iter().zip(csi.sample_sizes()).zip(csi.vertical_sizes()) {
        println!("  {name:<16} {n}/{total}");
    }
    Ok(())
}

pub fn taily_stats(s: &Settings) -> Result<()> {
    let vs = load_news(s)?;
    let stats = taily_build(&vs, s.expansion.mu);
    let path = s.news_dir().join(TAILY_FILE);
    stats.save(&path)?;
    let terms: usize = stats.verticals.iter().map(|v| v.terms.len()).sum();
    println!("taily: {} verticals, {terms} term entries (mu {}) -> {}", stats.verticals.len(), stats.mu, path.display());
    Ok(())
}

struct Loaded {
    target: InvertedIndex,
    news: Option<VerticalSet>,
    csi: Option<Csi>,
    taily: Option<TailyStats>,
    external: Option<InvertedIndex>,
}

impl Loaded {
    fn inputs<'a>(&'a self, topics: &'a [prvf_core::Topic], qrels: &'a Qrels) -> ExperimentInputs<'a> {
        ExperimentInputs {
            target: &self.target,
            news: self.news.as_ref(),
            csi: self.csi.as_ref(),
            taily: self.taily.as_ref(),
            external: self.external.as_ref(),
            topics,
            qrels,
        }
    }
}

/// Load only the indexes the methods need.
fn load(s: &Settings, methods: &[Method]) -> Result<Loaded> {
    let target_path = s.target_index();
    if !target_path.exists() {
        return Err(Error::MissingInput(format!("target index at {} (run `prvf index --target ...`)", target_path.display())).into());
    }
    let target = InvertedIndex::load(&target_path)?;
    let news_needed = methods.iter().any(|m| matches!(m, Method::PrfNews | Method::Prvf(_)));
    let csi_needed = methods.iter().any(|m| matches!(m, Method::Prvf(Selector::Crcs(_) | Selector::RankS(_))));
    let taily_needed = methods.iter().any(|m| matches!(m, Method::Prvf(Selector::Taily(_))));
    let news = if news_needed { Some(load_news(s)?) } else { None };
    let csi = match (&news, csi_needed) {
        (Some(vs), true) => {
            let path = s.news_dir().join(CSI_FILE);
            if !path.exists() {
                return Err(Error::MissingInput(format!("centralized sample index at {} (run `prvf csi`)", path.display())).into());
            }
            Some(Csi::load(&path, vs)?)
        }
        _ => None,
    };
    let taily = match taily_needed {
        true => {
            let path = s.news_dir().join(TAILY_FILE);
            if path.exists() {
                let stats = TailyStats::load(&path)?;
                if stats.mu == s.expansion.mu {
                    Some(stats)
                } else {
                    warn!("{} was built with mu {}; rebuilding for mu {}", path.display(), stats.mu, s.expansion.mu);
                    None
                }
            } else {
                info!("no taily statistics on disk; building them in memory");
                None
            }
        }
        false => None,
    };
    let external = if methods.contains(&Method::PrfExternal) {
        let path = s.external_index();
        if !path.exists() {
            return Err(Error::MissingInput(format!("external index at {} (run `prvf index --external ...`)", path.display())).into());
        }
        Some(InvertedIndex::load(&path)?)
    } else {
        None
    };
    Ok(Loaded {
        target,
        news,
        csi,
        taily,
        external,
    })
}

fn experiment_config(s: &Settings, methods: Vec<Method>) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        methods,
        expansion: s.expansion_params(),
        external_fb_docs: s.expansion.external_fb_docs,
        depth: s.expansion.depth,
        window: s.fixed_window()?,
        baseline: s.evaluate.baseline.clone(),
    })
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn trace(s: &Settings, query: &str, timestamp: Option<u64>, method: &str) -> Result<(prvf_core::eval::QueryTrace, u64)> {
    let m = s.method(method)?;
    let loaded = load(s, &[m])?;
    let qrels = Qrels::new();
    let config = experiment_config(s, vec![m])?;
    let t_q = timestamp.unwrap_or_else(now);
    Ok((trace_query(&m, query, t_q, &loaded.inputs(&[], &qrels), &config)?, t_q))
}

pub fn expand(s: &Settings, query: &str, timestamp: Option<u64>, method: &str) -> Result<()> {
    let (t, t_q) = trace(s, query, timestamp, method)?;
    let sel = t.selection.as_ref();
    let out = json!({
        "method": t.method,
        "timestamp": t_q,
        "selected": sel.map(|r| &r.verticals),
        "selection_scores": sel.map(|r| r.scores.iter().map(|(k, v)| (k.clone(), json!(v))).collect::<serde_json::Map<_, _>>()),
        "selection_fallback": sel.map(|r| r.fallback),
        "c_sel": t.cost.c_sel,
        "expansion_terms": t.expansion.as_ref().map(|e| e.ranked_terms()),
        "final_model": t.final_model.as_map(),
        "feedback": t.feedback.docs().iter().map(|d| json!({"id": d.id, "origin": d.origin, "score": d.score})).collect::<Vec<_>>(),
        "cost": t.cost,
    });
    writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&out)?)?;
    Ok(())
}

pub fn search(s: &Settings, query: &str, timestamp: Option<u64>, method: &str, topic: &str, hits: usize) -> Result<()> {
    let (t, _) = trace(s, query, timestamp, method)?;
    let mut run = RunFile::default();
    let tag = s.method(method)?.tag();
    run.push_ranking(topic, &tag, t.ranking.iter().take(hits).map(|(d, sc)| (d.as_str(), *sc)));
    let stdout = std::io::stdout();
    run.emit(stdout.lock())?;
    Ok(())
}

pub fn evaluate(s: &Settings, sweep: Option<SweepParam>) -> Result<()> {
    let topics_path = s.paths.topics.as_ref().ok_or_else(|| Error::MissingInput("--topics".into()))?;
    let qrels_path = s.paths.qrels.as_ref().ok_or_else(|| Error::MissingInput("--qrels".into()))?;
    let methods = s.methods()?;
    if methods.is_empty() {
        return Err(Error::MissingInput("--methods".into()).into());
    }
    let topics = read_topics(topics_path).with_context(|| format!("reading topics {}", topics_path.display()))?;
    let qrels = Qrels::from_path(qrels_path).with_context(|| format!("reading qrels {}", qrels_path.display()))?;
    let loaded = load(s, &methods)?;
    let inputs = loaded.inputs(&topics, &qrels);
    let reports = s.paths.out.join("reports");
    fs::create_dir_all(&reports).with_context(|| format!("creating {}", reports.display()))?;

    let axis = s.sweep(sweep)?;
    if let Some(axis) = axis {
        let config = ExperimentConfig {
            window: None,
            ..experiment_config(&Settings { window: Default::default(), ..s.clone() }, methods)?
        };
        let rows = run_sweep(&inputs, &config, &axis)?;
        let path = reports.join("sweep.csv");
        write_sweep_csv(BufWriter::new(create(&path)?), &rows)?;
        print_sweep(&rows);
        println!("wrote {}", path.display());
    } else {
        let config = experiment_config(s, methods)?;
        let out = run_experiment(&inputs, &config)?;
        out.write(&s.paths.out)?;
        print_summary(&out);
        println!("wrote {} run files and reports under {}", out.runs.len(), s.paths.out.display());
    }
    fs::write(reports.join("config.toml"), s.to_toml()?).context("writing reports/config.toml")?;
    Ok(())
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn print_summary(out: &ExperimentOutput) {
    println!(
        "{:<14} {:>6} {:>7} {:>7} {:>7} {:>9} {:>9} {:>8}",
        "method", "topics", "MAP", "NDCG30", "R1000", "C_QE", "C_Lat", "dC_QE%"
    );
    for m in &out.summaries {
        let change = m.qe_change.map(|c| format!("{c:+.1}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<14} {:>6} {:>7.4} {:>7.4} {:>7.4} {:>9.1} {:>9.1} {:>8}",
            m.method, m.evaluated_topics, m.map, m.ndcg30, m.recall1000, m.costs.c_qe, m.costs.c_lat, change
        );
    }
    if let Some(m) = out.summaries.first() {
        if m.excluded_topics > 0 {
            println!("{} topics without relevant judgments were excluded", m.excluded_topics);
        }
    }
}

fn print_sweep(rows: &[SweepRow]) {
    println!("{:<16} {:<14} {:>7} {:>7}", "param", "method", "MAP", "NDCG30");
    for r in rows {
        println!("{:<16} {:<14} {:>7.4} {:>7.4}", format!("{}={}", r.param, r.value), r.method, r.map, r.ndcg30);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    Standard,
    Drifting,
}

pub struct SynthOptions {
    pub kind: SynthKind,
    pub seed: u64,
    pub news_docs: Option<usize>,
    pub tweets: Option<usize>,
    pub external_docs: Option<usize>,
    pub topics: Option<usize>,
}

pub fn synth(s: &Settings, o: &SynthOptions) -> Result<()> {
    let mut spec = match o.kind {
        SynthKind::Standard => BenchmarkSpec::standard(o.seed),
        SynthKind::Drifting => BenchmarkSpec::drifting(o.seed),
    };
    spec.news_docs = o.news_docs.unwrap_or(spec.news_docs);
    spec.tweets = o.tweets.unwrap_or(spec.tweets);
    spec.external_docs = o.external_docs.unwrap_or(spec.external_docs);
    spec.topics = o.topics.unwrap_or(spec.topics);
    let b = benchmark(&spec);
    let dir = s.paths.out.join("data");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, docs) in [("news.jsonl", &b.news), ("tweets.jsonl", &b.tweets), ("external.jsonl", &b.external)] {
        let mut w = BufWriter::new(create(&dir.join(name))?);
        for d in docs {
            writeln!(w, "{}", d.to_json_line())?;
        }
        w.flush()?;
    }
    fs::write(dir.join("verticals.json"), serde_json::to_string_pretty(&b.config)?)?;
    let mut w = BufWriter::new(create(&dir.join("topics.jsonl"))?);
    for t in &b.topics {
        writeln!(w, "{}", serde_json::to_string(t)?)?;
    }
    w.flush()?;
    b.qrels.write(BufWriter::new(create(&dir.join("qrels.txt"))?))?;
    println!(
        "synth: {} news, {} target, {} external docs, {} topics -> {}",
        b.news.len(),
        b.tweets.len(),
        b.external.len(),
        b.topics.len(),
        dir.display()
    );
    Ok(())
}
