//! Immutable inverted index with Dirichlet-smoothed query-likelihood scoring.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::query::{rank_order, DocRef, QueryModel, ScoredDoc};

/// Dirichlet smoothing mass used throughout unless configured otherwise.
pub const DEFAULT_MU: f64 = 2500.0;

pub const INDEX_FORMAT: &str = "prvf-index";
pub const INDEX_VERSION: u32 = 1;

/// Number of postings touched by retrievals.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct PostingsCounter {
    accessed: u64,
}

impl PostingsCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, n: u64) {
        self.accessed += n;
    }

    pub fn get(&self) -> u64 {
        self.accessed
    }
}

/// Term and collection frequencies used as the smoothing background.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollectionStats {
    cf: HashMap<String, u64>,
    total_tokens: u64,
    num_docs: u64,
    max_doc_len: u32,
}

impl CollectionStats {
    /// Sum of several disjoint collections' statistics.
    pub fn aggregate<'a>(parts: impl IntoIterator<Item = &'a CollectionStats>) -> Self {
        let mut out = CollectionStats::default();
        for p in parts {
            for (t, c) in &p.cf {
                *out.cf.entry(t.clone()).or_default() += c;
            }
            out.total_tokens += p.total_tokens;
            out.num_docs += p.num_docs;
            out.max_doc_len = out.max_doc_len.max(p.max_doc_len);
        }
        out
    }

    pub fn cf(&self, term: &str) -> u64 {
        self.cf.get(term).copied().unwrap_or(0)
    }

    /// Background probability cf(t)/|C|, or `None` for out-of-vocabulary terms.
    pub fn p_bg(&self, term: &str) -> Option<f64> {
        match self.cf.get(term) {
            Some(&c) if c > 0 && self.total_tokens > 0 => Some(c as f64 / self.total_tokens as f64),
            _ => None,
        }
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn num_docs(&self) -> u64 {
        self.num_docs
    }

    pub fn max_doc_len(&self) -> u32 {
        self.max_doc_len
    }

    pub fn vocabulary_size(&self) -> usize {
        self.cf.len()
    }
}

/// ln of the Dirichlet-smoothed estimate (tf + μ·p_bg) / (|d| + μ).
#[inline]
pub fn dirichlet_log_prob(tf: u32, doc_len: u32, p_bg: f64, mu: f64) -> f64 {
    ((tf as f64 + mu * p_bg) / (doc_len as f64 + mu)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: DocRef,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocMeta {
    pub id: String,
    pub timestamp: u64,
    pub source: String,
    pub len: u32,
}

/// Bag-of-words form of a document, the unit an index is built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocEntry {
    pub id: String,
    pub timestamp: u64,
    pub source: String,
    pub terms: Vec<(String, u32)>,
}

impl From<&Document> for DocEntry {
    fn from(doc: &Document) -> Self {
        let mut counts: HashMap<&str, u32> = HashMap::new();
        for t in &doc.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        let mut terms: Vec<(String, u32)> = counts.into_iter().map(|(t, c)| (t.to_string(), c)).collect();
        terms.sort();
        DocEntry {
            id: doc.id.clone(),
            timestamp: doc.timestamp,
            source: doc.source.clone(),
            terms,
        }
    }
}

/// An inverted index over a fixed document set.
///
/// Doc-refs are assigned in ascending document-id order, so ordering by
/// doc-ref within one index agrees with ordering by document id across
/// indexes.
#[derive(Debug, Clone)]
pub struct InvertedIndex {
    terms: Vec<String>,
    lookup: HashMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    docs: Vec<DocMeta>,
    forward: Vec<Vec<(u32, u32)>>,
    own: Arc<CollectionStats>,
    background: Option<Arc<CollectionStats>>,
}

pub fn build_index<I>(docs: I) -> Result<InvertedIndex>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<Document>,
{
    InvertedIndex::from_entries(docs.into_iter().map(|d| DocEntry::from(std::borrow::Borrow::borrow(&d))))
}

impl InvertedIndex {
    pub fn empty() -> Self {
        Self::from_entries(std::iter::empty()).expect("empty index")
    }

    pub fn from_entries(entries: impl IntoIterator<Item = DocEntry>) -> Result<Self> {
        let mut entries: Vec<DocEntry> = entries.into_iter().collect();
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        for w in entries.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::DuplicateId(w[0].id.clone()));
            }
        }
        if entries.len() > u32::MAX as usize {
            return Err(Error::InvalidParam("too many documents".into()));
        }

        let mut terms = Vec::new();
        let mut lookup: HashMap<String, u32> = HashMap::new();
        let mut postings: Vec<Vec<Posting>> = Vec::new();
        let mut docs = Vec::with_capacity(entries.len());
        let mut forward = Vec::with_capacity(entries.len());
        let mut cf: HashMap<String, u64> = HashMap::new();
        let mut total_tokens = 0u64;
        let mut max_doc_len = 0u32;

        for (i, entry) in entries.into_iter().enumerate() {
            let doc = DocRef(i as u32);
            let mut fwd = Vec::with_capacity(entry.terms.len());
            let mut len = 0u32;
            let mut seen = HashSet::new();
            for (term, tf) in entry.terms {
                if tf == 0 {
                    continue;
                }
                if !seen.insert(term.clone()) {
                    return Err(Error::InvalidParam(format!("term `{term}` repeated in entry {}", entry.id)));
                }
                let id = match lookup.get(&term) {
                    Some(&id) => id,
                    None => {
                        let id = terms.len() as u32;
                        terms.push(term.clone());
                        lookup.insert(term.clone(), id);
                        postings.push(Vec::new());
                        id
                    }
                };
                postings[id as usize].push(Posting { doc, tf });
                *cf.entry(term).or_default() += tf as u64;
                fwd.push((id, tf));
                len += tf;
            }
            fwd.sort_unstable();
            total_tokens += len as u64;
            max_doc_len = max_doc_len.max(len);
            forward.push(fwd);
            docs.push(DocMeta {
                id: entry.id,
                timestamp: entry.timestamp,
                source: entry.source,
                len,
            });
        }

        let own = Arc::new(CollectionStats {
            cf,
            total_tokens,
            num_docs: docs.len() as u64,
            max_doc_len,
        });
        Ok(InvertedIndex {
            terms,
            lookup,
            postings,
            docs,
            forward,
            own,
            background: None,
        })
    }

    /// Score against an injected statistics snapshot instead of this index's own.
    pub fn with_background(mut self, stats: Arc<CollectionStats>) -> Self {
        self.background = Some(stats);
        self
    }

    pub fn background(&self) -> &CollectionStats {
        self.background.as_deref().unwrap_or(&self.own)
    }

    pub fn stats(&self) -> &CollectionStats {
        &self.own
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn total_tokens(&self) -> u64 {
        self.own.total_tokens
    }

    pub fn vocabulary_size(&self) -> usize {
        self.terms.len()
    }

    pub fn df(&self, term: &str) -> u64 {
        self.postings(term).len() as u64
    }

    pub fn cf(&self, term: &str) -> u64 {
        self.own.cf(term)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        match self.lookup.get(term) {
            Some(&id) => &self.postings[id as usize],
            None => &[],
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    pub fn doc(&self, doc: DocRef) -> Result<&DocMeta> {
        self.docs.get(doc.0 as usize).ok_or(Error::UnknownDocRef(doc.0))
    }

    pub fn docs(&self) -> impl ExactSizeIterator<Item = (DocRef, &DocMeta)> {
        self.docs.iter().enumerate().map(|(i, m)| (DocRef(i as u32), m))
    }

    pub fn find(&self, id: &str) -> Option<DocRef> {
        self.docs
            .binary_search_by(|m| m.id.as_str().cmp(id))
            .ok()
            .map(|i| DocRef(i as u32))
    }

    /// Term frequencies of one document.
    pub fn term_counts(&self, doc: DocRef) -> Result<impl Iterator<Item = (&str, u32)>> {
        let fwd = self.forward.get(doc.0 as usize).ok_or(Error::UnknownDocRef(doc.0))?;
        Ok(fwd.iter().map(|&(t, tf)| (self.terms[t as usize].as_str(), tf)))
    }

    pub fn tf(&self, term: &str, doc: DocRef) -> Result<u32> {
        let fwd = self.forward.get(doc.0 as usize).ok_or(Error::UnknownDocRef(doc.0))?;
        Ok(match self.lookup.get(term) {
            Some(id) => fwd
                .binary_search_by(|(t, _)| t.cmp(id))
                .map(|i| fwd[i].1)
                .unwrap_or(0),
            None => 0,
        })
    }

    pub fn entry(&self, doc: DocRef) -> Result<DocEntry> {
        let meta = self.doc(doc)?;
        let mut terms: Vec<(String, u32)> = self.term_counts(doc)?.map(|(t, c)| (t.to_string(), c)).collect();
        terms.sort();
        Ok(DocEntry {
            id: meta.id.clone(),
            timestamp: meta.timestamp,
            source: meta.source.clone(),
            terms,
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = DocEntry> + '_ {
        (0..self.docs.len()).map(|i| self.entry(DocRef(i as u32)).expect("in range"))
    }

    /// A fresh index over the documents satisfying `keep`, with statistics
    /// recomputed over those documents only.
    pub fn filtered(&self, mut keep: impl FnMut(&DocMeta) -> bool) -> InvertedIndex {
        let entries: Vec<DocEntry> = self
            .docs()
            .filter(|(_, m)| keep(m))
            .map(|(d, _)| self.entry(d).expect("in range"))
            .collect();
        InvertedIndex::from_entries(entries).expect("ids already unique")
    }

    /// Σ_t w_t · ln p(t|d) under Dirichlet smoothing.
    pub fn score_ql(&self, q: &QueryModel, doc: DocRef, mu: f64) -> Result<f64> {
        let meta = self.doc(doc)?;
        let bg = self.background();
        let mut score = 0.0;
        for (term, w) in q.iter() {
            let Some(p) = bg.p_bg(term) else { continue };
            let tf = self.tf(term, doc)?;
            score += w * dirichlet_log_prob(tf, meta.len, p, mu);
        }
        Ok(score)
    }

    /// C_R: total postings-list length of the query terms in this index.
    pub fn postings_cost(&self, q: &QueryModel) -> u64 {
        q.terms().map(|t| self.df(t)).sum()
    }

    /// Rank every document containing at least one query term.
    pub fn retrieve_all(&self, q: &QueryModel, mu: f64, counter: &mut PostingsCounter) -> Result<Vec<ScoredDoc>> {
        self.retrieve(q, None, mu, counter)
    }

    /// Top-`k` documents by query likelihood, ties by ascending doc-ref.
    pub fn retrieve_topk(&self, q: &QueryModel, k: usize, mu: f64, counter: &mut PostingsCounter) -> Result<Vec<ScoredDoc>> {
        if k == 0 {
            return Err(Error::InvalidParam("k must be at least 1".into()));
        }
        self.retrieve(q, Some(k), mu, counter)
    }

    fn retrieve(&self, q: &QueryModel, k: Option<usize>, mu: f64, counter: &mut PostingsCounter) -> Result<Vec<ScoredDoc>> {
        if q.is_empty() {
            return Err(Error::EmptyQuery);
        }
        if mu.is_nan() || mu <= 0.0 {
            return Err(Error::InvalidParam(format!("mu must be positive, got {mu}")));
        }
        let bg = self.background();
        let qterms: Vec<(f64, Option<f64>, &[Posting])> =
            q.iter().map(|(t, w)| (w, bg.p_bg(t), self.postings(t))).collect();

        let nq = qterms.len();
        let mut tfs: HashMap<DocRef, Vec<u32>> = HashMap::new();
        for (i, (_, _, plist)) in qterms.iter().enumerate() {
            counter.add(plist.len() as u64);
            for p in plist.iter() {
                tfs.entry(p.doc).or_insert_with(|| vec![0; nq])[i] = p.tf;
            }
        }

        let mut scored: Vec<ScoredDoc> = tfs
            .into_iter()
            .map(|(doc, tf)| {
                let len = self.docs[doc.0 as usize].len;
                let mut score = 0.0;
                for (i, (w, p, _)) in qterms.iter().enumerate() {
                    if let Some(p) = p {
                        score += w * dirichlet_log_prob(tf[i], len, *p, mu);
                    }
                }
                ScoredDoc { doc, score }
            })
            .collect();

        match k {
            Some(k) if k < scored.len() => {
                scored.select_nth_unstable_by(k - 1, rank_order);
                scored.truncate(k);
                scored.sort_by(rank_order);
            }
            _ => scored.sort_by(rank_order),
        }
        Ok(scored)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let persisted = PersistedIndex {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            terms: self.terms.clone(),
            docs: self.docs.clone(),
            postings: self
                .postings
                .iter()
                .map(|pl| pl.iter().map(|p| (p.doc.0, p.tf)).collect())
                .collect(),
        };
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), &persisted)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let p: PersistedIndex = serde_json::from_reader(std::io::BufReader::new(file))?;
        if p.format != INDEX_FORMAT || p.version != INDEX_VERSION {
            return Err(Error::Format(format!(
                "{}: expected {INDEX_FORMAT} v{INDEX_VERSION}, found {} v{}",
                path.display(),
                p.format,
                p.version
            )));
        }
        if p.postings.len() != p.terms.len() {
            return Err(Error::Format("postings/terms length mismatch".into()));
        }
        let mut by_doc: Vec<Vec<(String, u32)>> = vec![Vec::new(); p.docs.len()];
        for (term, plist) in p.terms.iter().zip(&p.postings) {
            for &(doc, tf) in plist {
                let slot = by_doc
                    .get_mut(doc as usize)
                    .ok_or_else(|| Error::Format(format!("posting references doc {doc}")))?;
                slot.push((term.clone(), tf));
            }
        }
        let entries = p.docs.into_iter().zip(by_doc).map(|(m, mut terms)| {
            terms.sort();
            DocEntry {
                id: m.id,
                timestamp: m.timestamp,
                source: m.source,
                terms,
            }
        });
        Self::from_entries(entries)
    }
}

#[derive(Serialize, Deserialize)]
struct PersistedIndex {
    format: String,
    version: u32,
    terms: Vec<String>,
    docs: Vec<DocMeta>,
    postings: Vec<Vec<(u32, u32)>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> Document {
        Document::new(id, 0, "s", text)
    }

    fn q(terms: &[&str]) -> QueryModel {
        QueryModel::from_terms(terms.iter().copied()).unwrap()
    }

    #[test]
    fn empty_index() {
        let idx = build_index(Vec::<Document>::new()).unwrap();
        assert_eq!(idx.num_docs(), 0);
        assert_eq!(idx.total_tokens(), 0);
        assert_eq!(idx.postings_cost(&q(&["a"])), 0);
    }

    #[test]
    fn single_doc_stats() {
        let idx = build_index([doc("1", "a a b")]).unwrap();
        assert_eq!(idx.df("a"), 1);
        assert_eq!(idx.cf("a"), 2);
        assert_eq!(idx.df("b"), 1);
        assert_eq!(idx.total_tokens(), 3);
    }

    #[test]
    fn postings_in_doc_ref_order() {
        let idx = build_index([doc("2", "a b"), doc("1", "a")]).unwrap();
        let pl = idx.postings("a");
        assert_eq!(pl.len(), 2);
        assert!(pl[0].doc < pl[1].doc);
        assert_eq!(idx.doc(pl[0].doc).unwrap().id, "1");
    }

    #[test]
    fn duplicate_doc_rejected() {
        assert!(matches!(build_index([doc("1", "a"), doc("1", "b")]), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn hand_computed_scores() {
        let idx = build_index([doc("d1", "a a b"), doc("d2", "b c")]).unwrap();
        let query = q(&["a"]);
        let d1 = idx.find("d1").unwrap();
        let d2 = idx.find("d2").unwrap();
        let s1 = idx.score_ql(&query, d1, 1.0).unwrap();
        let s2 = idx.score_ql(&query, d2, 1.0).unwrap();
        assert!((s1 - 0.6f64.ln()).abs() < 1e-12);
        assert!((s2 - (0.4f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_tf_score() {
        let idx = build_index([doc("d1", "x y z"), doc("d2", "t")]).unwrap();
        let d1 = idx.find("d1").unwrap();
        let p = 1.0 / 4.0;
        let mu = 2500.0;
        let s = idx.score_ql(&q(&["t"]), d1, mu).unwrap();
        assert!((s - (mu * p / (3.0 + mu)).ln()).abs() < 1e-12);
    }

    #[test]
    fn unknown_doc_ref() {
        let idx = build_index([doc("d1", "x")]).unwrap();
        assert!(matches!(idx.score_ql(&q(&["x"]), DocRef(5), 1.0), Err(Error::UnknownDocRef(5))));
    }

    #[test]
    fn longer_doc_scores_lower_with_fixed_background() {
        let base = build_index([doc("d1", "a b"), doc("d2", "a c c")]).unwrap();
        let longer = build_index([doc("d1", "a b zz"), doc("d2", "a c c")])
            .unwrap()
            .with_background(Arc::new(base.stats().clone()));
        let own = Arc::new(base.stats().clone());
        let base = base.with_background(own);
        let query = q(&["a"]);
        let before = base.score_ql(&query, DocRef(0), 10.0).unwrap();
        let after = longer.score_ql(&query, DocRef(0), 10.0).unwrap();
        assert!(after < before);
    }

    #[test]
    fn absent_term_retrieves_nothing() {
        let idx = build_index([doc("d1", "x")]).unwrap();
        let mut c = PostingsCounter::new();
        assert!(idx.retrieve_topk(&q(&["nope"]), 10, 1.0, &mut c).unwrap().is_empty());
        assert_eq!(c.get(), 0);
    }

    #[test]
    fn counter_sums_document_frequencies() {
        let idx = build_index([
            doc("1", "a b"),
            doc("2", "a b"),
            doc("3", "a b"),
            doc("4", "b"),
            doc("5", "b c"),
        ])
        .unwrap();
        let query = q(&["a", "b"]);
        let mut c = PostingsCounter::new();
        idx.retrieve_topk(&query, 2, 2500.0, &mut c).unwrap();
        assert_eq!(c.get(), 8);
        assert_eq!(idx.postings_cost(&query), 8);
    }

    #[test]
    fn topk_ties_by_doc_ref() {
        let idx = build_index([doc("c", "x"), doc("a", "x"), doc("b", "x")]).unwrap();
        let mut c = PostingsCounter::new();
        let hits = idx.retrieve_topk(&q(&["x"]), 2, 1.0, &mut c).unwrap();
        assert_eq!(hits.iter().map(|h| h.doc).collect::<Vec<_>>(), [DocRef(0), DocRef(1)]);
        assert!(idx.retrieve_topk(&q(&["x"]), 0, 1.0, &mut c).is_err());
        let all = idx.retrieve_topk(&q(&["x"]), 10, 1.0, &mut c).unwrap();
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn filtered_recomputes_stats() {
        let idx = build_index([
            Document::new("1", 5, "s", "a a"),
            Document::new("2", 10, "s", "a b"),
        ])
        .unwrap();
        let view = idx.filtered(|m| m.timestamp >= 10);
        assert_eq!(view.num_docs(), 1);
        assert_eq!(view.cf("a"), 1);
        assert_eq!(view.total_tokens(), 2);
        assert_eq!(idx.num_docs(), 2);
    }

    #[test]
    fn save_load_round_trip() {
        let idx = build_index([doc("1", "a b b"), doc("2", "c a")]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.json");
        idx.save(&path).unwrap();
        let back = InvertedIndex::load(&path).unwrap();
        assert_eq!(back.num_docs(), 2);
        assert_eq!(back.cf("b"), 2);
        let query = q(&["a", "b"]);
        for d in 0..2 {
            assert_eq!(
                idx.score_ql(&query, DocRef(d), 3.0).unwrap(),
                back.score_ql(&query, DocRef(d), 3.0).unwrap()
            );
        }
        std::fs::write(&path, r#"{"format":"other","version":9,"terms":[],"docs":[],"postings":[]}"#).unwrap();
        assert!(matches!(InvertedIndex::load(&path), Err(Error::Format(_))));
    }
}
