//! Batch runner: every method over every topic, with metrics and costs.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{average_precision, ndcg_at_k, recall_at_depth, EVAL_DEPTH, NDCG_DEPTH};
use super::trec::{Qrels, RunFile, Topic};
use crate::cost::{aggregate, write_costs_csv, CostReport, CostSummary, ExpansionCost};
use crate::error::{Error, Result};
use crate::federation::{Broker, Csi, TimeWindow, VerticalSet};
use crate::index::{InvertedIndex, PostingsCounter};
use crate::query::QueryModel;
use crate::relevance::{clrm, expand_and_rerun, ExpansionParams, FeedbackSet, IndexFeedback, PrfOutcome};
use crate::selection::{taily_build, SelectionResult, Selector, TailyStats};

/// Retrieval pipelines compared by the runner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Query likelihood on the target, no expansion.
    NoPrf,
    /// Feedback from the target index itself.
    Prf,
    /// Feedback from the unpartitioned news corpus.
    PrfNews,
    /// Feedback from a static external index.
    PrfExternal,
    /// Vertical feedback with a resource selector.
    Prvf(Selector),
    /// Condensed-list re-ranking of the initial target ranking.
    Clrm,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::NoPrf => "no-prf".into(),
            Method::Prf => "prf".into(),
            Method::PrfNews => "prf.news".into(),
            Method::PrfExternal => "prf.wiki".into(),
            Method::Prvf(s) => format!("prvf({s})"),
            Method::Clrm => "clrm".into(),
        }
    }

    /// File-name safe run tag.
    pub fn tag(&self) -> String {
        self.name().replace(['.', '('], "-").replace(')', "")
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "no-prf" | "noprf" | "ql" => Method::NoPrf,
            "prf" => Method::Prf,
            "prf.news" | "prf-news" => Method::PrfNews,
            "prf.wiki" | "prf-wiki" | "prf.external" | "prf-external" => Method::PrfExternal,
            "clrm" => Method::Clrm,
            other => {
                let inner = other
                    .strip_prefix("prvf(")
                    .and_then(|r| r.strip_suffix(')'))
                    .or_else(|| other.strip_prefix("prvf-"))
                    .ok_or_else(|| Error::InvalidParam(format!("unknown method `{s}`")))?;
                Method::Prvf(inner.parse()?)
            }
        })
    }
}

/// Indexes and judgments an experiment runs over.
#[derive(Clone, Copy)]
pub struct ExperimentInputs<'a> {
    pub target: &'a InvertedIndex,
    pub news: Option<&'a VerticalSet>,
    pub csi: Option<&'a Csi>,
    pub taily: Option<&'a TailyStats>,
    pub external: Option<&'a InvertedIndex>,
    pub topics: &'a [Topic],
    pub qrels: &'a Qrels,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub expansion: ExpansionParams,
    /// Feedback depth for the static external index.
    pub external_fb_docs: usize,
    pub depth: usize,
    /// Freshness window applied to the news corpus at each topic's timestamp.
    pub window: Option<TimeWindow>,
    /// Method whose mean costs the others are compared against.
    pub baseline: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            methods: vec![Method::NoPrf],
            expansion: ExpansionParams::default(),
            external_fb_docs: 10,
            depth: EVAL_DEPTH,
            window: None,
            baseline: "prf.news".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub method: String,
    pub topic: String,
    pub map: f64,
    pub ndcg30: f64,
    pub recall1000: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub evaluated_topics: usize,
    pub excluded_topics: usize,
    pub map: f64,
    pub ndcg30: f64,
    pub recall1000: f64,
    pub costs: CostSummary,
    /// Percent change of mean C_QE against the baseline method.
    pub qe_change: Option<f64>,
    /// Percent change of mean C_Lat against the baseline method.
    pub lat_change: Option<f64>,
    /// Mean number of selected verticals (vertical feedback only).
    pub mean_selected: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub runs: Vec<(Method, RunFile)>,
    pub metrics: Vec<MetricRow>,
    pub costs: Vec<CostReport>,
    pub summaries: Vec<MethodSummary>,
}

impl ExperimentOutput {
    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn metrics_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a MetricRow> + 'a {
        self.metrics.iter().filter(move |m| m.method == method)
    }

    pub fn costs_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a CostReport> + 'a {
        self.costs.iter().filter(move |c| c.method == method)
    }

    /// `runs/<tag>.run`, `reports/metrics.csv`, `reports/costs.csv`, `reports/summary.csv`.
    pub fn write(&self, out_dir: impl AsRef<Path>) -> Result<()> {
        let out = out_dir.as_ref();
        let runs = out.join("runs");
        let reports = out.join("reports");
        for d in [&runs, &reports] {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        for (method, run) in &self.runs {
            let path = runs.join(format!("{}.run", method.tag()));
            let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = std::io::BufWriter::new(f);
            run.emit(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
        }
        let path = reports.join("metrics.csv");
        write_metrics_csv(create(&path)?, &self.metrics)?;
        let path = reports.join("costs.csv");
        write_costs_csv(create(&path)?, &self.costs)?;
        let path = reports.join("summary.csv");
        write_summary_csv(create(&path)?, &self.summaries)?;
        Ok(())
    }
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "topic", "map", "ndcg30", "recall1000"])?;
    for r in rows {
        w.write_record([r.method.clone(), r.topic.clone(), fmt4(r.map), fmt4(r.ndcg30), fmt4(r.recall1000)])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn write_summary_csv<W: Write>(out: W, rows: &[MethodSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method", "topics", "excluded", "map", "ndcg30", "recall1000", "C_SEL", "C_VR", "C_VF", "C_QE", "C_R_final",
        "C_Lat", "C_QE_change_pct", "C_Lat_change_pct", "mean_selected",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.1}")).unwrap_or_default();
    for s in rows {
        let c = &s.costs;
        w.write_record([
            s.method.clone(),
            s.evaluated_topics.to_string(),
            s.excluded_topics.to_string(),
            fmt4(s.map),
            fmt4(s.ndcg30),
            fmt4(s.recall1000),
            format!("{:.1}", c.c_sel),
            format!("{:.1}", c.c_vr),
            format!("{:.1}", c.c_vf),
            format!("{:.1}", c.c_qe),
            format!("{:.1}", c.c_r_final),
            format!("{:.1}", c.c_lat),
            opt(s.qe_change),
            opt(s.lat_change),
            s.mean_selected.map(|x| format!("{x:.2}")).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

/// News-side indexes as seen by one topic.
struct NewsView<'a> {
    vs: Cow<'a, VerticalSet>,
    union: Option<Cow<'a, InvertedIndex>>,
    csi: Option<Cow<'a, Csi>>,
    taily: Option<Cow<'a, TailyStats>>,
}

struct Needs {
    news: bool,
    union: bool,
    csi: bool,
    taily: bool,
}

impl Needs {
    fn of(methods: &[Method]) -> Self {
        let mut n = Needs {
            news: false,
            union: false,
            csi: false,
            taily: false,
        };
        for m in methods {
            match m {
                Method::PrfNews => {
                    n.news = true;
                    n.union = true;
                }
                Method::Prvf(Selector::Taily(_)) => {
                    n.news = true;
                    n.taily = true;
                }
                Method::Prvf(Selector::Crcs(_) | Selector::RankS(_)) => {
                    n.news = true;
                    n.csi = true;
                }
                Method::Prvf(Selector::All) => n.news = true,
                _ => {}
            }
        }
        n
    }
}

struct TopicResult {
    rankings: Vec<Vec<(String, f64)>>,
    costs: Vec<CostReport>,
}

fn outcome_ranking(target: &InvertedIndex, out: &PrfOutcome) -> Vec<(String, f64)> {
    out.ranking
        .iter()
        .map(|h| (target.doc(h.doc).expect("hit from target").id.clone(), h.score))
        .collect()
}

fn news_view<'a>(
    inputs: &ExperimentInputs<'a>,
    needs: &Needs,
    base_union: Option<&'a InvertedIndex>,
    base_taily: Option<&'a TailyStats>,
    config: &ExperimentConfig,
    t_q: u64,
) -> Option<NewsView<'a>> {
    let vs = inputs.news.filter(|_| needs.news)?;
    Some(match &config.window {
        None => NewsView {
            vs: Cow::Borrowed(vs),
            union: base_union.map(Cow::Borrowed),
            csi: inputs.csi.map(Cow::Borrowed),
            taily: inputs.taily.or(base_taily).map(Cow::Borrowed),
        },
        Some(w) => {
            let wvs = vs.windowed(t_q, w);
            NewsView {
                union: needs.union.then(|| Cow::Owned(wvs.union_index())),
                csi: if needs.csi {
                    inputs.csi.map(|c| Cow::Owned(c.windowed(&wvs)))
                } else {
                    None
                },
                taily: needs.taily.then(|| Cow::Owned(taily_build(&wvs, config.expansion.mu))),
                vs: Cow::Owned(wvs),
            }
        }
    })
}

type MethodRun = (Vec<(String, f64)>, CostReport, Option<PrfOutcome>);

fn run_method(
    method: &Method,
    q: &QueryModel,
    inputs: &ExperimentInputs<'_>,
    news: Option<&NewsView<'_>>,
    config: &ExperimentConfig,
) -> Result<MethodRun> {
    let params = &config.expansion;
    let target = inputs.target;
    let missing = |what: &str| Error::MissingInput(format!("{what} (required by {method})"));
    let outcome = match method {
        Method::NoPrf => {
            let mut c = PostingsCounter::new();
            let hits = target.retrieve_topk(q, config.depth, params.mu, &mut c)?;
            let ranking = hits
                .iter()
                .map(|h| (target.doc(h.doc).expect("hit from target").id.clone(), h.score))
                .collect();
            return Ok((ranking, CostReport::from_expansion(&ExpansionCost::None, c.get()), None));
        }
        Method::Prf => {
            let src = IndexFeedback { index: target, label: "target" };
            expand_and_rerun(q, &src, target, params, config.depth)?
        }
        Method::PrfNews => {
            let union = news.and_then(|n| n.union.as_deref()).ok_or_else(|| missing("news corpus"))?;
            let src = IndexFeedback { index: union, label: "news" };
            expand_and_rerun(q, &src, target, params, config.depth)?
        }
        Method::PrfExternal => {
            let ext = inputs.external.ok_or_else(|| missing("external index"))?;
            let src = IndexFeedback { index: ext, label: "external" };
            let p = ExpansionParams {
                fb_docs: config.external_fb_docs,
                ..*params
            };
            expand_and_rerun(q, &src, target, &p, config.depth)?
        }
        Method::Prvf(selector) => {
            let n = news.ok_or_else(|| missing("news verticals"))?;
            let broker = Broker {
                verticals: &n.vs,
                csi: n.csi.as_deref(),
                taily: n.taily.as_deref(),
                selector: *selector,
            };
            expand_and_rerun(q, &broker, target, params, config.depth)?
        }
        Method::Clrm => clrm(q, target, params, config.depth)?,
    };
    let report = CostReport::from_expansion(&outcome.expansion_cost, outcome.final_postings);
    Ok((outcome_ranking(target, &outcome), report, Some(outcome)))
}

fn check_inputs(inputs: &ExperimentInputs<'_>, needs: &Needs, methods: &[Method]) -> Result<()> {
    if needs.news && inputs.news.is_none() {
        return Err(Error::MissingInput("news vertical set".into()));
    }
    if needs.csi && inputs.csi.is_none() {
        return Err(Error::MissingInput("centralized sample index".into()));
    }
    if methods.contains(&Method::PrfExternal) && inputs.external.is_none() {
        return Err(Error::MissingInput("external expansion index".into()));
    }
    Ok(())
}

/// Everything one method did for one query.
#[derive(Debug, Clone)]
pub struct QueryTrace {
    pub method: String,
    pub ranking: Vec<(String, f64)>,
    /// θ^F, or the original query when nothing was expanded.
    pub final_model: QueryModel,
    pub expansion: Option<QueryModel>,
    pub feedback: FeedbackSet,
    pub selection: Option<SelectionResult>,
    pub cost: CostReport,
}

/// Run a single method on one query issued at `t_q`, keeping the intermediate models.
pub fn trace_query(method: &Method, query: &str, t_q: u64, inputs: &ExperimentInputs<'_>, config: &ExperimentConfig) -> Result<QueryTrace> {
    config.expansion.validate()?;
    let methods = [*method];
    let needs = Needs::of(&methods);
    check_inputs(inputs, &needs, &methods)?;
    let q = QueryModel::from_text(query)?;
    let union = match (needs.union && config.window.is_none(), inputs.news) {
        (true, Some(vs)) => Some(vs.union_index()),
        _ => None,
    };
    let taily = match (needs.taily && config.window.is_none() && inputs.taily.is_none(), inputs.news) {
        (true, Some(vs)) => Some(taily_build(vs, config.expansion.mu)),
        _ => None,
    };
    let view = news_view(inputs, &needs, union.as_ref(), taily.as_ref(), config, t_q);
    let selection = match (method, &view) {
        (Method::Prvf(s), Some(v)) => Some(s.select(&q, &v.vs, v.csi.as_deref(), v.taily.as_deref(), config.expansion.mu)?),
        _ => None,
    };
    let (ranking, cost, outcome) = run_method(method, &q, inputs, view.as_ref(), config)?;
    let (final_model, expansion, feedback) = match outcome {
        Some(o) => (o.final_model, o.expansion, o.feedback),
        None => (q, None, FeedbackSet::default()),
    };
    Ok(QueryTrace {
        method: method.name(),
        ranking,
        final_model,
        expansion,
        feedback,
        selection,
        cost: cost.labeled(&method.name(), ""),
    })
}

/// Run every configured method over every topic.
pub fn run_experiment(inputs: &ExperimentInputs<'_>, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.expansion.validate()?;
    if config.methods.is_empty() {
        return Err(Error::MissingInput("no methods configured".into()));
    }
    if config.depth == 0 {
        return Err(Error::InvalidParam("ranking depth must be at least 1".into()));
    }
    let needs = Needs::of(&config.methods);
    check_inputs(inputs, &needs, &config.methods)?;

    let base_union = match (needs.union && config.window.is_none(), inputs.news) {
        (true, Some(vs)) => Some(vs.union_index()),
        _ => None,
    };
    let base_taily = match (needs.taily && config.window.is_none() && inputs.taily.is_none(), inputs.news) {
        (true, Some(vs)) => Some(taily_build(vs, config.expansion.mu)),
        _ => None,
    };

    let results: Vec<TopicResult> = inputs
        .topics
        .par_iter()
        .map(|topic| -> Result<TopicResult> {
            let nm = config.methods.len();
            let q = match QueryModel::from_text(&topic.query) {
                Ok(q) => q,
                Err(Error::EmptyQuery) => {
                    warn!("topic {} has no query terms", topic.id);
                    return Ok(TopicResult {
                        rankings: vec![Vec::new(); nm],
                        costs: config.methods.iter().map(|m| CostReport::no_prf(0).labeled(&m.name(), &topic.id)).collect(),
                    });
                }
                Err(e) => return Err(e),
            };
            let view = news_view(inputs, &needs, base_union.as_ref(), base_taily.as_ref(), config, topic.timestamp);
            let mut rankings = Vec::with_capacity(nm);
            let mut costs = Vec::with_capacity(nm);
            for m in &config.methods {
                let (ranking, cost, _) = run_method(m, &q, inputs, view.as_ref(), config)?;
                rankings.push(ranking);
                costs.push(cost.labeled(&m.name(), &topic.id));
            }
            Ok(TopicResult { rankings, costs })
        })
        .collect::<Result<_>>()?;

    let mut runs: Vec<(Method, RunFile)> = config.methods.iter().map(|m| (*m, RunFile::default())).collect();
    let mut metrics = Vec::new();
    let mut costs = Vec::new();
    let mut per_method_costs: Vec<Vec<CostReport>> = vec![Vec::new(); config.methods.len()];
    let mut excluded = 0usize;
    for (topic, res) in inputs.topics.iter().zip(&results) {
        let judged = inputs.qrels.has_topic(&topic.id) && inputs.qrels.num_relevant(&topic.id) > 0;
        if !judged {
            excluded += 1;
        }
        for (mi, m) in config.methods.iter().enumerate() {
            let ranking = &res.rankings[mi];
            let (tag, run) = (&m.tag(), &mut runs[mi].1);
            run.push_ranking(&topic.id, tag, ranking.iter().map(|(d, s)| (d.as_str(), *s)));
            if judged {
                let ids: Vec<&str> = ranking.iter().map(|(d, _)| d.as_str()).collect();
                metrics.push(MetricRow {
                    method: m.name(),
                    topic: topic.id.clone(),
                    map: average_precision(&ids, inputs.qrels, &topic.id)?,
                    ndcg30: ndcg_at_k(&ids, inputs.qrels, &topic.id, NDCG_DEPTH)?,
                    recall1000: recall_at_depth(&ids, inputs.qrels, &topic.id, EVAL_DEPTH)?,
                });
            }
            costs.push(res.costs[mi].clone());
            per_method_costs[mi].push(res.costs[mi].clone());
        }
    }

    let mut summaries = Vec::new();
    for (mi, m) in config.methods.iter().enumerate() {
        let name = m.name();
        let rows: Vec<&MetricRow> = metrics.iter().filter(|r| r.method == name).collect();
        let mean = |f: fn(&MetricRow) -> f64| {
            if rows.is_empty() {
                0.0
            } else {
                rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64
            }
        };
        let cost_summary = aggregate(&per_method_costs[mi])?;
        let mean_selected = matches!(m, Method::Prvf(_)).then(|| {
            let c = &per_method_costs[mi];
            c.iter().map(|r| r.per_vertical.len() as f64).sum::<f64>() / c.len() as f64
        });
        summaries.push(MethodSummary {
            method: name,
            evaluated_topics: rows.len(),
            excluded_topics: excluded,
            map: mean(|r| r.map),
            ndcg30: mean(|r| r.ndcg30),
            recall1000: mean(|r| r.recall1000),
            costs: cost_summary,
            qe_change: None,
            lat_change: None,
            mean_selected,
        });
    }
    if let Some(base) = summaries.iter().find(|s| s.method == config.baseline).map(|s| s.costs.clone()) {
        for s in &mut summaries {
            let (qe, lat) = s.costs.reduction_vs(&base);
            s.qe_change = qe;
            s.lat_change = lat;
        }
    }

    Ok(ExperimentOutput {
        runs,
        metrics,
        costs,
        summaries,
    })
}

/// Which window dimension a sweep varies.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// Vary the corpus age, keeping `span` fixed.
    Age { values: Vec<u64>, span: Option<u64> },
    /// Vary the time span, keeping `age` fixed.
    Span { values: Vec<u64>, age: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: u64,
    pub method: String,
    pub map: f64,
    pub ndcg30: f64,
}

/// Re-run the experiment once per window setting.
pub fn run_sweep(inputs: &ExperimentInputs<'_>, config: &ExperimentConfig, axis: &SweepAxis) -> Result<Vec<SweepRow>> {
    let points: Vec<(String, u64, TimeWindow)> = match axis {
        SweepAxis::Age { values, span } => values
            .iter()
            .map(|&a| Ok(("age".to_string(), a, TimeWindow::new(a, *span)?)))
            .collect::<Result<_>>()?,
        SweepAxis::Span { values, age } => values
            .iter()
            .map(|&s| Ok(("span".to_string(), s, TimeWindow::new(*age, Some(s))?)))
            .collect::<Result<_>>()?,
    };
    let mut rows = Vec::new();
    for (param, value, window) in points {
        let cfg = ExperimentConfig {
            window: Some(window),
            ..config.clone()
        };
        let out = run_experiment(inputs, &cfg)?;
        for s in &out.summaries {
            rows.push(SweepRow {
                param: param.clone(),
                value,
                method: s.method.clone(),
                map: s.map,
                ndcg30: s.ndcg30,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "method", "map", "ndcg30"])?;
    for r in rows {
        w.write_record([format!("{}={}", r.param, r.value), r.method.clone(), fmt4(r.map), fmt4(r.ndcg30)])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Per-method mean of a metric column, keyed by method name.
pub fn mean_by_method(rows: &[MetricRow], f: fn(&MetricRow) -> f64) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(r.method.clone()).or_default();
        e.0 += f(r);
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}
