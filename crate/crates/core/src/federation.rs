//! Vertical registry, centralized sample index and broker-side feedback merging.
//!
//! Every vertical index scores against one shared snapshot of the global
//! collection statistics, so scores from different verticals are directly
//! comparable and merging is a plain sort.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{assign_vertical, Document, VerticalConfig};
use crate::cost::ExpansionCost;
use crate::error::{Error, Result};
use crate::index::{CollectionStats, DocEntry, InvertedIndex, PostingsCounter};
use crate::query::QueryModel;
use crate::relevance::{FeedbackSet, FeedbackSource};
use crate::selection::{SelectionResult, Selector, TailyStats};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "prvf-verticals";
pub const CSI_FILE: &str = "csi.json";
pub const TAILY_FILE: &str = "taily.json";

#[derive(Debug, Clone)]
pub struct Vertical {
    pub name: String,
    pub index: InvertedIndex,
}

/// Topic verticals sharing one global statistics snapshot.
#[derive(Debug, Clone)]
pub struct VerticalSet {
    verticals: Vec<Vertical>,
    global: Arc<CollectionStats>,
}

impl VerticalSet {
    /// Partition `docs` into one index per configured vertical.
    pub fn build<I>(docs: I, cfg: &VerticalConfig) -> Result<Self>
    where
        I: IntoIterator,
        I::Item: std::borrow::Borrow<Document>,
    {
        let mut groups: BTreeMap<String, Vec<DocEntry>> =
            cfg.vertical_names().map(|n| (n.to_string(), Vec::new())).collect();
        for doc in docs {
            let doc = std::borrow::Borrow::borrow(&doc);
            let name = assign_vertical(doc, cfg)?;
            groups.get_mut(name).expect("vertical listed in config").push(DocEntry::from(doc));
        }
        let parts = groups
            .into_iter()
            .map(|(name, entries)| Ok((name, InvertedIndex::from_entries(entries)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_indexes(parts)
    }

    /// Assemble from per-vertical indexes, recomputing the global snapshot.
    pub fn from_indexes(parts: Vec<(String, InvertedIndex)>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut ids = HashSet::new();
        for (name, index) in &parts {
            if name.is_empty() || !seen.insert(name.clone()) {
                return Err(Error::InvalidConfig(format!("duplicate or empty vertical name `{name}`")));
            }
            for (_, meta) in index.docs() {
                if !ids.insert(meta.id.clone()) {
                    return Err(Error::DuplicateId(meta.id.clone()));
                }
            }
        }
        let global = Arc::new(CollectionStats::aggregate(parts.iter().map(|(_, i)| i.stats())));
        let verticals = parts
            .into_iter()
            .map(|(name, index)| Vertical {
                name,
                index: index.with_background(global.clone()),
            })
            .collect();
        Ok(VerticalSet { verticals, global })
    }

    pub fn len(&self) -> usize {
        self.verticals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verticals.is_empty()
    }

    pub fn verticals(&self) -> &[Vertical] {
        &self.verticals
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.verticals.iter().map(|v| v.name.as_str())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.verticals.iter().position(|v| v.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Vertical> {
        self.position(name).map(|i| &self.verticals[i])
    }

    pub fn global(&self) -> &Arc<CollectionStats> {
        &self.global
    }

    pub fn num_docs(&self) -> usize {
        self.verticals.iter().map(|v| v.index.num_docs()).sum()
    }

    /// Monolithic index over every vertical's documents.
    pub fn union_index(&self) -> InvertedIndex {
        InvertedIndex::from_entries(self.verticals.iter().flat_map(|v| v.index.entries()))
            .expect("document ids are unique across verticals")
    }

    /// Restrict every vertical to a time window and recompute the snapshot.
    pub fn windowed(&self, t_q: u64, w: &TimeWindow) -> VerticalSet {
        let parts = self
            .verticals
            .iter()
            .map(|v| (v.name.clone(), apply_time_window(&v.index, t_q, w)))
            .collect();
        Self::from_indexes(parts).expect("subset of a valid set")
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::new();
        for v in &self.verticals {
            let file = format!("{}.index.json", v.name);
            v.index.save(dir.join(&file))?;
            entries.push(ManifestVertical {
                name: v.name.clone(),
                docs: v.index.num_docs() as u64,
                tokens: v.index.total_tokens(),
                file,
            });
        }
        let manifest = Manifest {
            format: MANIFEST_FORMAT.to_string(),
            version: crate::index::INDEX_VERSION,
            verticals: entries,
            global: GlobalSummary::from(self.global.as_ref()),
        };
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = Manifest::load(dir)?;
        let parts = manifest
            .verticals
            .iter()
            .map(|m| Ok((m.name.clone(), InvertedIndex::load(dir.join(&m.file))?)))
            .collect::<Result<Vec<_>>>()?;
        let vs = Self::from_indexes(parts)?;
        for (m, v) in manifest.verticals.iter().zip(&vs.verticals) {
            if m.docs != v.index.num_docs() as u64 {
                return Err(Error::Format(format!("vertical `{}` doc count differs from manifest", m.name)));
            }
        }
        Ok(vs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestVertical {
    pub name: String,
    pub docs: u64,
    pub tokens: u64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalSummary {
    pub num_docs: u64,
    pub total_tokens: u64,
    pub vocabulary_size: u64,
    pub max_doc_len: u32,
}

impl From<&CollectionStats> for GlobalSummary {
    fn from(s: &CollectionStats) -> Self {
        GlobalSummary {
            num_docs: s.num_docs(),
            total_tokens: s.total_tokens(),
            vocabulary_size: s.vocabulary_size() as u64,
            max_doc_len: s.max_doc_len(),
        }
    }
}

/// Listing written next to the per-vertical index files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub verticals: Vec<ManifestVertical>,
    pub global: GlobalSummary,
}

impl Manifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Format(format!("{}: not a vertical manifest", path.display())));
        }
        Ok(m)
    }
}

/// Documents with timestamp in [t_q − age − span, t_q − age].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub age: u64,
    /// `None` means unbounded.
    pub span: Option<u64>,
}

impl TimeWindow {
    pub const DAY: u64 = 86_400;

    pub fn new(age: u64, span: Option<u64>) -> Result<Self> {
        if span == Some(0) {
            return Err(Error::InvalidParam("time window span must be positive".into()));
        }
        Ok(TimeWindow { age, span })
    }

    pub fn admits(&self, timestamp: u64, t_q: u64) -> bool {
        let Some(newest) = t_q.checked_sub(self.age) else {
            return false;
        };
        let oldest = match self.span {
            Some(span) => newest.saturating_sub(span),
            None => 0,
        };
        (oldest..=newest).contains(&timestamp)
    }
}

/// A freshly indexed view over the documents admitted by `w`.
///
/// The view scores with its own recomputed statistics.
pub fn apply_time_window(index: &InvertedIndex, t_q: u64, w: &TimeWindow) -> InvertedIndex {
    let view = index.filtered(|m| w.admits(m.timestamp, t_q));
    if view.is_empty() {
        warn!("time window {w:?} at t={t_q} admits no documents");
    }
    view
}

const SAMPLE_SCALE: u64 = 1_000_000;

/// Stable 64-bit hash of (seed, id): FNV-1a followed by a splitmix64 finalizer.
pub fn hash64(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(id.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

pub fn sampled(seed: u64, id: &str, rate: f64) -> bool {
    let threshold = (rate * SAMPLE_SCALE as f64).round() as u64;
    hash64(seed, id) % SAMPLE_SCALE < threshold
}

/// Centralized sample index over all verticals.
#[derive(Debug, Clone)]
pub struct Csi {
    index: InvertedIndex,
    owner: Vec<usize>,
    names: Vec<String>,
    vertical_sizes: Vec<u64>,
    sample_sizes: Vec<u64>,
    rate: f64,
    seed: u64,
}

pub fn build_csi(vs: &VerticalSet, rate: f64, seed: u64) -> Result<Csi> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidParam(format!("CSI rate {rate} outside (0, 1]")));
    }
    Csi::from_members(vs, rate, seed, |_, id| sampled(seed, id, rate))
}

impl Csi {
    fn from_members(vs: &VerticalSet, rate: f64, seed: u64, mut keep: impl FnMut(usize, &str) -> bool) -> Result<Csi> {
        let mut entries = Vec::new();
        let mut owner_by_id = HashMap::new();
        let mut sample_sizes = vec![0u64; vs.len()];
        for (vi, v) in vs.verticals().iter().enumerate() {
            for (d, meta) in v.index.docs() {
                if keep(vi, &meta.id) {
                    entries.push(v.index.entry(d)?);
                    owner_by_id.insert(meta.id.clone(), vi);
                    sample_sizes[vi] += 1;
                }
            }
        }
        let index = InvertedIndex::from_entries(entries)?;
        if index.is_empty() {
            warn!("centralized sample index is empty");
        }
        let owner = index.docs().map(|(_, m)| owner_by_id[&m.id]).collect();
        Ok(Csi {
            index,
            owner,
            names: vs.names().map(str::to_string).collect(),
            vertical_sizes: vs.verticals().iter().map(|v| v.index.num_docs() as u64).collect(),
            sample_sizes,
            rate,
            seed,
        })
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    /// Position (in the vertical set) of the vertical owning a CSI document.
    pub fn owner(&self, doc: crate::query::DocRef) -> usize {
        self.owner[doc.0 as usize]
    }

    pub fn vertical_names(&self) -> &[String] {
        &self.names
    }

    pub fn vertical_sizes(&self) -> &[u64] {
        &self.vertical_sizes
    }

    pub fn sample_sizes(&self) -> &[u64] {
        &self.sample_sizes
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.index.num_docs()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Sample members restricted to a windowed vertical set.
    pub fn windowed(&self, windowed_set: &VerticalSet) -> Csi {
        let members: HashSet<&str> = self.index.docs().map(|(_, m)| m.id.as_str()).collect();
        Csi::from_members(windowed_set, self.rate, self.seed, |_, id| members.contains(id)).expect("subset of a valid CSI")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut members: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (d, meta) in self.index.docs() {
            members.entry(self.names[self.owner(d)].clone()).or_default().push(meta.id.clone());
        }
        let file = CsiFile {
            format: "prvf-csi".into(),
            rate: self.rate,
            seed: self.seed,
            members,
        };
        fs::write(path, serde_json::to_string(&file)?).map_err(|e| Error::io(path, e))
    }

    /// Re-materialize a saved sample against its vertical set.
    pub fn load(path: impl AsRef<Path>, vs: &VerticalSet) -> Result<Csi> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CsiFile = serde_json::from_str(&text)?;
        if file.format != "prvf-csi" {
            return Err(Error::Format(format!("{}: not a CSI file", path.display())));
        }
        let mut wanted: HashMap<&str, usize> = HashMap::new();
        for (name, ids) in &file.members {
            let vi = vs
                .position(name)
                .ok_or_else(|| Error::Format(format!("CSI vertical `{name}` not in vertical set")))?;
            for id in ids {
                wanted.insert(id, vi);
            }
        }
        let csi = Csi::from_members(vs, file.rate, file.seed, |vi, id| wanted.get(id) == Some(&vi))?;
        if csi.len() != wanted.len() {
            return Err(Error::Format("CSI references documents missing from the vertical set".into()));
        }
        Ok(csi)
    }
}

#[derive(Serialize, Deserialize)]
struct CsiFile {
    format: String,
    rate: f64,
    seed: u64,
    members: BTreeMap<String, Vec<String>>,
}

/// Top-`k` from each selected vertical, merged and cut back to `k`.
///
/// Returns the merged feedback set and the postings accessed in each
/// selected vertical.
pub fn vertical_feedback(
    q: &QueryModel,
    vs: &VerticalSet,
    sel: &SelectionResult,
    k: usize,
    mu: f64,
) -> Result<(FeedbackSet, BTreeMap<String, u64>)> {
    let per: Vec<(String, FeedbackSet, u64)> = sel
        .verticals
        .par_iter()
        .map(|name| {
            let v = vs
                .get(name)
                .ok_or_else(|| Error::InvalidParam(format!("selected vertical `{name}` does not exist")))?;
            let mut counter = PostingsCounter::new();
            let hits = v.index.retrieve_topk(q, k, mu, &mut counter)?;
            Ok((name.clone(), FeedbackSet::from_ranking(&v.index, name, &hits)?, counter.get()))
        })
        .collect::<Result<_>>()?;
    let mut counts = BTreeMap::new();
    let mut sets = Vec::with_capacity(per.len());
    for (name, set, n) in per {
        counts.insert(name, n);
        sets.push(set);
    }
    Ok((FeedbackSet::merge(sets, k), counts))
}

/// Selection followed by vertical feedback.
pub struct Broker<'a> {
    pub verticals: &'a VerticalSet,
    pub csi: Option<&'a Csi>,
    pub taily: Option<&'a TailyStats>,
    pub selector: Selector,
}

impl Broker<'_> {
    pub fn select(&self, q: &QueryModel, mu: f64) -> Result<SelectionResult> {
        self.selector.select(q, self.verticals, self.csi, self.taily, mu)
    }
}

impl FeedbackSource for Broker<'_> {
    fn feedback(&self, q: &QueryModel, k: usize, mu: f64) -> Result<(FeedbackSet, ExpansionCost)> {
        let sel = self.select(q, mu)?;
        info!("selected verticals {:?} (C_SEL={})", sel.verticals, sel.cost);
        let (fb, per_vertical) = vertical_feedback(q, self.verticals, &sel, k, mu)?;
        Ok((
            fb,
            ExpansionCost::Vertical {
                c_sel: sel.cost,
                per_vertical,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> VerticalConfig {
        VerticalConfig::from_json(r#"{"verticals":{"red":["r"],"blue":["b"],"green":["g"]}}"#).unwrap()
    }

    fn corpus() -> Vec<Document> {
        vec![
            Document::new("1", 100, "r", "apple apple cherry"),
            Document::new("2", 200, "b", "apple sky"),
            Document::new("3", 300, "b", "sky ocean"),
            Document::new("4", 400, "g", "grass apple"),
            Document::new("5", 500, "r", "cherry"),
        ]
    }

    #[test]
    fn partition_and_global_stats() {
        let vs = VerticalSet::build(corpus(), &cfg()).unwrap();
        assert_eq!(vs.names().collect::<Vec<_>>(), ["blue", "green", "red"]);
        assert_eq!(vs.num_docs(), 5);
        let union = vs.union_index();
        for t in union.terms() {
            let sum: u64 = vs.verticals().iter().map(|v| v.index.cf(t)).sum();
            assert_eq!(vs.global().cf(t), sum);
            assert_eq!(union.cf(t), sum);
        }
        assert_eq!(vs.global().total_tokens(), union.total_tokens());
    }

    #[test]
    fn single_source_fills_one_vertical() {
        let docs: Vec<_> = (0..4).map(|i| Document::new(i.to_string(), 0, "g", "x y")).collect();
        let vs = VerticalSet::build(docs, &cfg()).unwrap();
        let sizes: Vec<_> = vs.verticals().iter().map(|v| v.index.num_docs()).collect();
        assert_eq!(sizes, [0, 4, 0]);
    }

    #[test]
    fn unmapped_source_fails() {
        let docs = vec![Document::new("1", 0, "nobody", "x")];
        assert!(matches!(VerticalSet::build(docs, &cfg()), Err(Error::UnmappedSource(_))));
    }

    #[test]
    fn time_window_bounds() {
        let idx = crate::index::build_index(corpus()).unwrap();
        let all = apply_time_window(&idx, 350, &TimeWindow::new(0, None).unwrap());
        assert_eq!(all.num_docs(), 3);
        let span = apply_time_window(&idx, 500, &TimeWindow::new(0, Some(150)).unwrap());
        assert_eq!(span.docs().map(|(_, m)| m.id.as_str()).collect::<Vec<_>>(), ["4", "5"]);
        let aged = apply_time_window(&idx, 500, &TimeWindow::new(100, Some(100)).unwrap());
        assert_eq!(aged.docs().map(|(_, m)| m.id.as_str()).collect::<Vec<_>>(), ["3", "4"]);
        let empty = apply_time_window(&idx, 500, &TimeWindow::new(401, None).unwrap());
        assert!(empty.is_empty());
        assert!(TimeWindow::new(0, Some(0)).is_err());
    }

    #[test]
    fn csi_full_rate_is_whole_corpus() {
        let vs = VerticalSet::build(corpus(), &cfg()).unwrap();
        let csi = build_csi(&vs, 1.0, 7).unwrap();
        assert_eq!(csi.len(), 5);
        assert_eq!(csi.sample_sizes(), &[2, 1, 2]);
        for (d, meta) in csi.index().docs() {
            let v = &vs.verticals()[csi.owner(d)];
            assert!(v.index.find(&meta.id).is_some());
        }
        assert!(build_csi(&vs, 0.0, 7).is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(hash64(1, "abc"), hash64(1, "abc"));
        assert_ne!(hash64(1, "abc"), hash64(2, "abc"));
    }

    #[test]
    fn persist_round_trip() {
        let vs = VerticalSet::build(corpus(), &cfg()).unwrap();
        let csi = build_csi(&vs, 0.5, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        vs.save(dir.path()).unwrap();
        csi.save(dir.path().join(CSI_FILE)).unwrap();
        let back = VerticalSet::load(dir.path()).unwrap();
        assert_eq!(back.names().collect::<Vec<_>>(), vs.names().collect::<Vec<_>>());
        assert_eq!(back.global().as_ref(), vs.global().as_ref());
        let csi_back = Csi::load(dir.path().join(CSI_FILE), &back).unwrap();
        assert_eq!(csi_back.len(), csi.len());
        assert_eq!(csi_back.sample_sizes(), csi.sample_sizes());
        let m = Manifest::load(dir.path()).unwrap();
        assert_eq!(m.global.num_docs, 5);
    }
}
