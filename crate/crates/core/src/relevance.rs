//! Relevance-model (RM3) query expansion and condensed-list re-ranking.

use std::collections::{BTreeMap, HashSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::cost::ExpansionCost;
use crate::error::{Error, Result};
use crate::index::{InvertedIndex, PostingsCounter, DEFAULT_MU};
use crate::query::{rank_order, QueryModel, ScoredDoc};

/// Depth of every final ranking.
pub const FINAL_DEPTH: usize = 1000;

/// One pseudo-relevant document, materialized out of the index it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackDoc {
    pub id: String,
    /// Label of the index (or vertical) the document was retrieved from.
    pub origin: String,
    pub score: f64,
    pub len: u32,
    /// Term counts, sorted by term.
    pub terms: Vec<(String, u32)>,
}

/// Feedback documents ordered by score descending, ties by ascending document id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeedbackSet {
    docs: Vec<FeedbackDoc>,
}

fn feedback_order(a: &FeedbackDoc, b: &FeedbackDoc) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

impl FeedbackSet {
    pub fn from_ranking(index: &InvertedIndex, origin: &str, hits: &[ScoredDoc]) -> Result<Self> {
        let docs = hits
            .iter()
            .map(|h| {
                let meta = index.doc(h.doc)?;
                let mut terms: Vec<(String, u32)> = index.term_counts(h.doc)?.map(|(t, c)| (t.to_string(), c)).collect();
                terms.sort_unstable();
                Ok(FeedbackDoc {
                    id: meta.id.clone(),
                    origin: origin.to_string(),
                    score: h.score,
                    len: meta.len,
                    terms,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_docs(docs, usize::MAX))
    }

    /// Union of several result lists, re-sorted and cut to `k`.
    pub fn merge(parts: impl IntoIterator<Item = FeedbackSet>, k: usize) -> Self {
        Self::from_docs(parts.into_iter().flat_map(|p| p.docs).collect(), k)
    }

    pub fn from_docs(mut docs: Vec<FeedbackDoc>, k: usize) -> Self {
        docs.sort_by(feedback_order);
        let mut seen = HashSet::new();
        docs.retain(|d| seen.insert(d.id.clone()));
        docs.truncate(k);
        FeedbackSet { docs }
    }

    pub fn docs(&self) -> &[FeedbackDoc] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }
}

/// Feedback depth, expansion size, interpolation weight and smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionParams {
    pub fb_docs: usize,
    pub num_terms: usize,
    pub lambda: f64,
    pub mu: f64,
}

impl Default for ExpansionParams {
    fn default() -> Self {
        ExpansionParams {
            fb_docs: 50,
            num_terms: 20,
            lambda: 0.5,
            mu: DEFAULT_MU,
        }
    }
}

impl ExpansionParams {
    pub fn validate(&self) -> Result<()> {
        if self.fb_docs == 0 {
            return Err(Error::InvalidParam("feedback depth must be at least 1".into()));
        }
        if self.num_terms == 0 {
            return Err(Error::InvalidParam("expansion size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParam(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !self.mu.is_finite() || self.mu <= 0.0 {
            return Err(Error::InvalidParam(format!("mu must be positive, got {}", self.mu)));
        }
        Ok(())
    }
}

/// Relevance-model expansion distribution from pseudo-relevant documents.
///
/// p(w|θ^E) ∝ Σ_d p_mle(w|d) · p(q|d), with p(q|d) the softmax of the
/// feedback log-scores. Stopwords and single-character terms are dropped
/// before truncation to the `num_terms` heaviest terms.
pub fn estimate_rm1(fb: &FeedbackSet, num_terms: usize, stop: &HashSet<&str>) -> Result<QueryModel> {
    if fb.is_empty() {
        return Err(Error::InvalidParam("empty feedback set".into()));
    }
    if num_terms == 0 {
        return Err(Error::InvalidParam("expansion size must be at least 1".into()));
    }
    let max = fb.docs.iter().map(|d| d.score).fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = fb.docs.iter().map(|d| (d.score - max).exp()).collect();
    let z: f64 = shifted.iter().sum();

    let mut weights: BTreeMap<&str, f64> = BTreeMap::new();
    for (doc, w) in fb.docs.iter().zip(&shifted) {
        if doc.len == 0 {
            continue;
        }
        let p_q = w / z;
        for (term, tf) in &doc.terms {
            if term.chars().count() < 2 || stop.contains(term.as_str()) {
                continue;
            }
            *weights.entry(term.as_str()).or_default() += (*tf as f64 / doc.len as f64) * p_q;
        }
    }

    let mut ranked: Vec<(&str, f64)> = weights.into_iter().filter(|(_, w)| *w > 0.0).collect();
    if ranked.is_empty() {
        return Err(Error::EmptyExpansionModel);
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(num_terms);
    QueryModel::normalized(ranked.into_iter().map(|(t, w)| (t.to_string(), w)).collect())
}

/// θ^F = (1 − λ)·θ^∅ + λ·θ^E over the union vocabulary.
pub fn interpolate(orig: &QueryModel, exp: &QueryModel, lambda: f64) -> Result<QueryModel> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParam(format!("lambda {lambda} outside [0, 1]")));
    }
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for term in orig.terms().chain(exp.terms()) {
        if out.contains_key(term) {
            continue;
        }
        let w = (1.0 - lambda) * orig.weight(term) + lambda * exp.weight(term);
        if w > 0.0 {
            out.insert(term.to_string(), w);
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyQuery);
    }
    Ok(QueryModel::from_distribution_unchecked(out))
}

/// Anything that can produce pseudo-relevant documents for a query.
pub trait FeedbackSource {
    fn feedback(&self, q: &QueryModel, k: usize, mu: f64) -> Result<(FeedbackSet, ExpansionCost)>;
}

/// Feedback from a single, unpartitioned index.
#[derive(Debug, Clone, Copy)]
pub struct IndexFeedback<'a> {
    pub index: &'a InvertedIndex,
    pub label: &'a str,
}

impl FeedbackSource for IndexFeedback<'_> {
    fn feedback(&self, q: &QueryModel, k: usize, mu: f64) -> Result<(FeedbackSet, ExpansionCost)> {
        let mut counter = PostingsCounter::new();
        let hits = self.index.retrieve_topk(q, k, mu, &mut counter)?;
        let fb = FeedbackSet::from_ranking(self.index, self.label, &hits)?;
        Ok((fb, ExpansionCost::Monolithic(counter.get())))
    }
}

/// Everything produced by one expanded retrieval.
#[derive(Debug, Clone)]
pub struct PrfOutcome {
    pub ranking: Vec<ScoredDoc>,
    pub final_model: QueryModel,
    /// `None` when expansion fell back to the original query.
    pub expansion: Option<QueryModel>,
    pub feedback: FeedbackSet,
    pub expansion_cost: ExpansionCost,
    /// Postings accessed by the final retrieval on the target index.
    pub final_postings: u64,
}

/// Build θ^F from a feedback set, degrading to θ^∅ when no expansion is possible.
pub fn expansion_model(q: &QueryModel, fb: &FeedbackSet, params: &ExpansionParams) -> Result<(QueryModel, Option<QueryModel>)> {
    if fb.is_empty() {
        warn!("empty feedback set; using the original query");
        return Ok((q.clone(), None));
    }
    match estimate_rm1(fb, params.num_terms, crate::tokenize::stopwords()) {
        Ok(exp) => Ok((interpolate(q, &exp, params.lambda)?, Some(exp))),
        Err(Error::EmptyExpansionModel) => {
            warn!("feedback documents yield no expansion terms; using the original query");
            Ok((q.clone(), None))
        }
        Err(e) => Err(e),
    }
}

/// Feedback retrieval, RM1 estimation, interpolation and final retrieval.
pub fn expand_and_rerun(
    q: &QueryModel,
    source: &dyn FeedbackSource,
    target: &InvertedIndex,
    params: &ExpansionParams,
    depth: usize,
) -> Result<PrfOutcome> {
    params.validate()?;
    let (feedback, expansion_cost) = source.feedback(q, params.fb_docs, params.mu)?;
    let (final_model, expansion) = expansion_model(q, &feedback, params)?;
    let mut counter = PostingsCounter::new();
    let ranking = target.retrieve_topk(&final_model, depth, params.mu, &mut counter)?;
    Ok(PrfOutcome {
        ranking,
        final_model,
        expansion,
        feedback,
        expansion_cost,
        final_postings: counter.get(),
    })
}

/// Re-score exactly the documents of `initial` under `final_model`.
pub fn clrm_rerank(initial: &[ScoredDoc], final_model: &QueryModel, target: &InvertedIndex, mu: f64) -> Result<Vec<ScoredDoc>> {
    let mut out = initial
        .iter()
        .map(|h| {
            Ok(ScoredDoc {
                doc: h.doc,
                score: target.score_ql(final_model, h.doc, mu)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(rank_order);
    Ok(out)
}

/// Condensed-list relevance models: feedback from the initial ranking on the
/// target, then re-ranking of that same list instead of a second retrieval.
pub fn clrm(q: &QueryModel, target: &InvertedIndex, params: &ExpansionParams, depth: usize) -> Result<PrfOutcome> {
    params.validate()?;
    let mut counter = PostingsCounter::new();
    let initial = target.retrieve_topk(q, depth, params.mu, &mut counter)?;
    let top = &initial[..initial.len().min(params.fb_docs)];
    let feedback = FeedbackSet::from_ranking(target, "target", top)?;
    let (final_model, expansion) = expansion_model(q, &feedback, params)?;
    let ranking = clrm_rerank(&initial, &final_model, target, params.mu)?;
    Ok(PrfOutcome {
        ranking,
        final_model,
        expansion,
        feedback,
        expansion_cost: ExpansionCost::Monolithic(counter.get()),
        final_postings: 0,
    })
}
