//! Resource selection: which verticals to search for a query.
//!
//! * CRCS votes with the top CSI documents, a linearly decaying weight per
//!   rank, scaled by each vertical's size over its sample size.
//! * Rank-S votes with softmax-normalized CSI scores decaying
//!   exponentially with rank and keeps every vertical above a threshold.
//! * Taily fits a Gamma distribution to each vertical's query-score
//!   distribution from term statistics alone and keeps the verticals
//!   expected to contribute at least `v` of the global top `n` documents.
//!
//! CSI-based selectors charge the CSI postings they touch as selection cost;
//! Taily charges one lookup per vertical.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::checked_gamma_ur;

use crate::error::{Error, Result};
use crate::federation::{Csi, VerticalSet};
use crate::index::{dirichlet_log_prob, PostingsCounter};
use crate::query::QueryModel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    /// Selected vertical names, most promising first.
    pub verticals: Vec<String>,
    /// C_SEL.
    pub cost: u64,
    /// Per-vertical selection scores, aligned with the vertical set order.
    pub scores: Vec<(String, f64)>,
    /// Whether a fallback rule produced the selection.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrcsParams {
    pub gamma: usize,
    pub m: usize,
}

impl Default for CrcsParams {
    fn default() -> Self {
        CrcsParams { gamma: 50, m: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSParams {
    pub base: f64,
    pub min_ranks: f64,
    pub gamma: usize,
}

impl Default for RankSParams {
    fn default() -> Self {
        RankSParams {
            base: 50.0,
            min_ranks: 1e-6,
            gamma: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailyParams {
    pub n: f64,
    pub v: f64,
}

impl Default for TailyParams {
    fn default() -> Self {
        TailyParams { n: 400.0, v: 50.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selector {
    Crcs(CrcsParams),
    RankS(RankSParams),
    Taily(TailyParams),
    /// Every vertical, at no selection cost.
    All,
}

impl Selector {
    pub fn name(&self) -> String {
        match self {
            Selector::Crcs(p) => format!("crcs{}", p.m),
            Selector::RankS(_) => "ranks".into(),
            Selector::Taily(_) => "taily".into(),
            Selector::All => "all".into(),
        }
    }

    pub fn select(
        &self,
        q: &QueryModel,
        vs: &VerticalSet,
        csi: Option<&Csi>,
        taily: Option<&TailyStats>,
        mu: f64,
    ) -> Result<SelectionResult> {
        let need_csi = || csi.ok_or_else(|| Error::MissingInput("centralized sample index".into()));
        match self {
            Selector::Crcs(p) => crcs_select(q, need_csi()?, p, mu, &mut PostingsCounter::new()),
            Selector::RankS(p) => ranks_select(q, need_csi()?, p, mu, &mut PostingsCounter::new()),
            Selector::Taily(p) => {
                let stats = taily.ok_or_else(|| Error::MissingInput("taily statistics".into()))?;
                taily_select(q, stats, p)
            }
            Selector::All => Ok(SelectionResult {
                verticals: vs.names().map(str::to_string).collect(),
                cost: 0,
                scores: Vec::new(),
                fallback: false,
            }),
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Selector {
    type Err = Error;

    /// `crcs1`, `crcs2`, `crcs3` (any `crcsN`), `ranks`, `taily` or `all`,
    /// with default parameters.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ranks" | "rank-s" => Ok(Selector::RankS(RankSParams::default())),
            "taily" => Ok(Selector::Taily(TailyParams::default())),
            "all" => Ok(Selector::All),
            _ => {
                let m = s
                    .strip_prefix("crcs")
                    .and_then(|m| m.parse::<usize>().ok())
                    .ok_or_else(|| Error::InvalidParam(format!("unknown selector `{s}`")))?;
                Ok(Selector::Crcs(CrcsParams { m, ..CrcsParams::default() }))
            }
        }
    }
}

/// Order (score desc, name asc) over vertical positions.
fn ranked(names: &[String], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| names[a].cmp(&names[b])));
    order
}

fn largest_verticals(csi: &Csi, m: usize) -> Vec<String> {
    let sizes: Vec<f64> = csi.vertical_sizes().iter().map(|&s| s as f64).collect();
    ranked(csi.vertical_names(), &sizes)
        .into_iter()
        .take(m)
        .map(|i| csi.vertical_names()[i].clone())
        .collect()
}

fn zip_scores(names: &[String], scores: &[f64]) -> Vec<(String, f64)> {
    names.iter().cloned().zip(scores.iter().copied()).collect()
}

pub fn crcs_select(q: &QueryModel, csi: &Csi, p: &CrcsParams, mu: f64, counter: &mut PostingsCounter) -> Result<SelectionResult> {
    let nv = csi.vertical_names().len();
    if p.gamma == 0 || p.m == 0 || p.m > nv {
        return Err(Error::InvalidParam(format!("CRCS needs gamma >= 1 and 1 <= m <= {nv}, got {p:?}")));
    }
    let before = counter.get();
    let hits = if csi.is_empty() {
        Vec::new()
    } else {
        csi.index().retrieve_topk(q, p.gamma, mu, counter)?
    };
    let cost = counter.get() - before;
    if hits.is_empty() {
        warn!("CSI returned no documents; selecting the {} largest verticals", p.m);
        return Ok(SelectionResult {
            verticals: largest_verticals(csi, p.m),
            cost,
            scores: Vec::new(),
            fallback: true,
        });
    }
    let mut votes = vec![0.0f64; nv];
    for (rank, hit) in hits.iter().enumerate() {
        votes[csi.owner(hit.doc)] += (p.gamma - rank) as f64;
    }
    let scores: Vec<f64> = (0..nv)
        .map(|i| {
            let s = csi.sample_sizes()[i];
            if s == 0 {
                0.0
            } else {
                csi.vertical_sizes()[i] as f64 / s as f64 * votes[i]
            }
        })
        .collect();
    let names = csi.vertical_names();
    Ok(SelectionResult {
        verticals: ranked(names, &scores).into_iter().take(p.m).map(|i| names[i].clone()).collect(),
        cost,
        scores: zip_scores(names, &scores),
        fallback: false,
    })
}

pub fn ranks_select(q: &QueryModel, csi: &Csi, p: &RankSParams, mu: f64, counter: &mut PostingsCounter) -> Result<SelectionResult> {
    if p.base.is_nan() || p.base <= 1.0 || p.min_ranks.is_nan() || p.min_ranks <= 0.0 || p.gamma == 0 {
        return Err(Error::InvalidParam(format!("Rank-S needs base > 1, minRanks > 0, gamma >= 1, got {p:?}")));
    }
    let before = counter.get();
    let hits = if csi.is_empty() {
        Vec::new()
    } else {
        csi.index().retrieve_topk(q, p.gamma, mu, counter)?
    };
    let cost = counter.get() - before;
    if hits.is_empty() {
        warn!("CSI returned no documents; selecting the largest vertical");
        return Ok(SelectionResult {
            verticals: largest_verticals(csi, 1),
            cost,
            scores: Vec::new(),
            fallback: true,
        });
    }
    let max = hits[0].score;
    let shifted: Vec<f64> = hits.iter().map(|h| (h.score - max).exp()).collect();
    let z: f64 = shifted.iter().sum();
    let names = csi.vertical_names();
    let mut votes = vec![0.0f64; names.len()];
    for (rank, (hit, w)) in hits.iter().zip(&shifted).enumerate() {
        votes[csi.owner(hit.doc)] += w / z * p.base.powi(-(rank as i32));
    }
    let order = ranked(names, &votes);
    let mut verticals: Vec<String> = order
        .iter()
        .filter(|&&i| votes[i] > p.min_ranks)
        .map(|&i| names[i].clone())
        .collect();
    if verticals.is_empty() {
        verticals.push(names[order[0]].clone());
    }
    Ok(SelectionResult {
        verticals,
        cost,
        scores: zip_scores(names, &votes),
        fallback: false,
    })
}

/// Moments of a term's per-document score contribution within one vertical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermStat {
    pub df: u64,
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailyVertical {
    pub name: String,
    pub num_docs: u64,
    pub terms: HashMap<String, TermStat>,
}

/// Vocabulary statistics backing Taily selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailyStats {
    pub mu: f64,
    pub verticals: Vec<TailyVertical>,
}

/// Per-(vertical, term) mean and variance of
/// x(t,d) = ln p(t|d) − ln p_floor(t) over the documents containing t, where
/// p_floor(t) = μ·p(t|BG) / (maxdoclen + μ) is the smallest smoothed estimate
/// any document can receive.
pub fn taily_build(vs: &VerticalSet, mu: f64) -> TailyStats {
    let global = vs.global();
    let max_len = global.max_doc_len();
    let verticals = vs
        .verticals()
        .iter()
        .map(|v| {
            let idx = &v.index;
            let mut terms = HashMap::new();
            for term in idx.terms() {
                let Some(p_bg) = global.p_bg(term) else { continue };
                let floor = dirichlet_log_prob(0, max_len, p_bg, mu);
                // Welford
                let (mut n, mut mean, mut m2) = (0u64, 0.0f64, 0.0f64);
                for posting in idx.postings(term) {
                    let len = idx.doc(posting.doc).expect("posting in range").len;
                    let x = (dirichlet_log_prob(posting.tf, len, p_bg, mu) - floor).max(0.0);
                    n += 1;
                    let delta = x - mean;
                    mean += delta / n as f64;
                    m2 += delta * (x - mean);
                }
                if n > 0 {
                    terms.insert(
                        term.to_string(),
                        TermStat {
                            df: n,
                            mean,
                            var: (m2 / n as f64).max(0.0),
                        },
                    );
                }
            }
            TailyVertical {
                name: v.name.clone(),
                num_docs: idx.num_docs() as u64,
                terms,
            }
        })
        .collect();
    TailyStats { mu, verticals }
}

impl TailyStats {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Fitted query-score distribution of one vertical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreModel {
    /// Expected number of documents containing any query term.
    pub candidates: f64,
    pub mean: f64,
    pub var: f64,
}

impl ScoreModel {
    /// Gamma shape and scale by the method of moments; `None` for a point mass.
    pub fn gamma_params(&self) -> Option<(f64, f64)> {
        if self.var > 1e-12 * self.mean * self.mean && self.mean > 0.0 {
            Some((self.mean * self.mean / self.var, self.var / self.mean))
        } else {
            None
        }
    }

    /// P(score > s).
    pub fn tail(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 1.0;
        }
        match self.gamma_params() {
            Some((shape, scale)) => checked_gamma_ur(shape, s / scale).unwrap_or(if self.mean > s { 1.0 } else { 0.0 }),
            None => {
                if self.mean > s {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Diagnostics of one Taily run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailyEstimate {
    pub models: Vec<Option<ScoreModel>>,
    /// Global score threshold s*.
    pub threshold: f64,
    /// Whether s* was found by bisection rather than clamped at zero.
    pub interior: bool,
    /// t_V per vertical.
    pub estimates: Vec<f64>,
}

fn score_model(q: &QueryModel, v: &TailyVertical) -> Option<ScoreModel> {
    if v.num_docs == 0 {
        return None;
    }
    let (mut mean, mut var, mut miss, mut any) = (0.0, 0.0, 1.0, false);
    for term in q.terms() {
        if let Some(st) = v.terms.get(term) {
            any = true;
            mean += st.mean;
            var += st.var;
            miss *= 1.0 - st.df as f64 / v.num_docs as f64;
        }
    }
    any.then_some(ScoreModel {
        candidates: v.num_docs as f64 * (1.0 - miss),
        mean,
        var,
    })
}

const BISECTION_STEPS: usize = 200;

/// Fit per-vertical score models and solve Σ_V n_V·P(X_V > s*) = n.
pub fn taily_estimate(q: &QueryModel, stats: &TailyStats, n: f64) -> TailyEstimate {
    let models: Vec<Option<ScoreModel>> = stats.verticals.iter().map(|v| score_model(q, v)).collect();
    let expected = |s: f64| -> f64 { models.iter().flatten().map(|m| m.candidates * m.tail(s)).sum() };

    let total: f64 = models.iter().flatten().map(|m| m.candidates).sum();
    let (threshold, interior) = if total <= n {
        (0.0, false)
    } else {
        let mut hi = models
            .iter()
            .flatten()
            .map(|m| m.mean + 10.0 * m.var.sqrt())
            .fold(0.0f64, f64::max)
            .max(1e-9);
        while expected(hi) > n {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if expected(mid) > n {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        (0.5 * (lo + hi), true)
    };
    let estimates = models
        .iter()
        .map(|m| m.map_or(0.0, |m| m.candidates * m.tail(threshold)))
        .collect();
    TailyEstimate {
        models,
        threshold,
        interior,
        estimates,
    }
}

pub fn taily_select(q: &QueryModel, stats: &TailyStats, p: &TailyParams) -> Result<SelectionResult> {
    if p.n.is_nan() || p.n < 1.0 || p.v.is_nan() || p.v < 1.0 {
        return Err(Error::InvalidParam(format!("Taily needs n >= 1 and v >= 1, got {p:?}")));
    }
    if stats.verticals.is_empty() {
        return Err(Error::MissingInput("taily statistics without verticals".into()));
    }
    let cost = stats.verticals.len() as u64;
    let names: Vec<String> = stats.verticals.iter().map(|v| v.name.clone()).collect();
    let est = taily_estimate(q, stats, p.n);
    if est.models.iter().all(Option::is_none) {
        warn!("no query term occurs in any vertical; selecting the largest vertical");
        let sizes: Vec<f64> = stats.verticals.iter().map(|v| v.num_docs as f64).collect();
        return Ok(SelectionResult {
            verticals: vec![names[ranked(&names, &sizes)[0]].clone()],
            cost,
            scores: Vec::new(),
            fallback: true,
        });
    }
    let order = ranked(&names, &est.estimates);
    let mut verticals: Vec<String> = order
        .iter()
        .filter(|&&i| est.estimates[i] >= p.v)
        .map(|&i| names[i].clone())
        .collect();
    if verticals.is_empty() {
        verticals.push(names[order[0]].clone());
    }
    Ok(SelectionResult {
        verticals,
        cost,
        scores: zip_scores(&names, &est.estimates),
        fallback: false,
    })
}
