use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::tokenize;

/// Tolerance on the unit-sum invariant of a [`QueryModel`].
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A weighted term distribution.
///
/// Weights are strictly positive and sum to one. Terms iterate in ascending
/// lexical order, which fixes the floating-point summation order in scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct QueryModel {
    weights: BTreeMap<String, f64>,
}

impl QueryModel {
    /// Maximum-likelihood model over the terms of `text`; uniform when no
    /// term repeats.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_terms(tokenize(text))
    }

    pub fn from_terms<I, S>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for t in terms {
            *counts.entry(t.into()).or_default() += 1.0;
        }
        Self::normalized(counts)
    }

    /// Normalize arbitrary non-negative weights. Zero weights are dropped.
    pub fn normalized(weights: BTreeMap<String, f64>) -> Result<Self> {
        if weights.values().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParam("query weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.values().sum();
        if total <= 0.0 {
            return Err(Error::EmptyQuery);
        }
        let weights: BTreeMap<_, _> = weights
            .into_iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(t, w)| (t, w / total))
            .collect();
        Ok(QueryModel { weights })
    }

    /// Accept weights that already form a distribution.
    pub fn from_distribution(weights: BTreeMap<String, f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyQuery);
        }
        if weights.values().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidParam("query weights must be positive".into()));
        }
        let total: f64 = weights.values().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidParam(format!("query weights sum to {total}")));
        }
        Ok(QueryModel { weights })
    }

    pub(crate) fn from_distribution_unchecked(weights: BTreeMap<String, f64>) -> Self {
        debug_assert!((weights.values().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE);
        QueryModel { weights }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(t, w)| (t.as_str(), *w))
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.weights.keys().map(String::as_str)
    }

    pub fn weight(&self, term: &str) -> f64 {
        self.weights.get(term).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn as_map(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }

    /// Terms sorted by weight descending, ties by term.
    pub fn ranked_terms(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.weights).expect("map serialization is infallible")
    }
}

impl TryFrom<BTreeMap<String, f64>> for QueryModel {
    type Error = Error;
    fn try_from(map: BTreeMap<String, f64>) -> Result<Self> {
        QueryModel::from_distribution(map)
    }
}

impl From<QueryModel> for BTreeMap<String, f64> {
    fn from(q: QueryModel) -> Self {
        q.weights
    }
}

/// Position of a document inside one index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DocRef(pub u32);

impl fmt::Display for DocRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A retrieved document with its natural-log query-likelihood score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDoc {
    pub doc: DocRef,
    pub score: f64,
}

/// Descending score, ascending doc-ref.
pub(crate) fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.doc.cmp(&b.doc))
}
