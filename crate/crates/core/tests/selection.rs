use std::collections::HashMap;

use proptest::prelude::*;
use prvf_core::federation::{build_csi, Broker, VerticalSet};
use prvf_core::index::PostingsCounter;
use prvf_core::relevance::{FeedbackSource, IndexFeedback};
use prvf_core::selection::{
    crcs_select, ranks_select, taily_build, taily_estimate, taily_select, CrcsParams, RankSParams, Selector, TailyParams, TailyStats,
    TailyVertical, TermStat,
};
use prvf_core::synthetic::{clustered_corpus, ClusteredCorpus, ClusteredSpec};
use prvf_core::{Document, QueryModel, VerticalConfig};

const MU: f64 = 2500.0;

fn small_corpus(seed: u64) -> ClusteredCorpus {
    clustered_corpus(
        seed,
        &ClusteredSpec {
            docs: 400,
            verticals: 5,
            vocab: 60,
            ..ClusteredSpec::default()
        },
    )
}

fn pick_query(corpus: &ClusteredCorpus, picks: &[usize]) -> QueryModel {
    QueryModel::from_terms(picks.iter().map(|&i| corpus.vocabulary[i % corpus.vocabulary.len()].clone())).unwrap()
}

#[test]
fn crcs_hand_computed() {
    // Vertical "a" holds docs 1, 3; "b" holds 2. CSI at rate 1 is the whole corpus.
    let cfg = VerticalConfig::from_json(r#"{"verticals":{"a":["sa"],"b":["sb"]}}"#).unwrap();
    let docs = vec![
        Document::new("1", 0, "sa", "storm storm"),
        Document::new("2", 0, "sb", "storm rain"),
        Document::new("3", 0, "sa", "storm rain rain wind"),
        Document::new("4", 0, "sb", "wind"),
    ];
    let vs = VerticalSet::build(docs, &cfg).unwrap();
    let csi = build_csi(&vs, 1.0, 0).unwrap();
    let q = QueryModel::from_text("storm").unwrap();
    let mut c = PostingsCounter::new();
    let r = crcs_select(&q, &csi, &CrcsParams { gamma: 10, m: 1 }, MU, &mut c).unwrap();
    // Ranking: 1 (tf 2, len 2), 2 (tf 1, len 2), 3 (tf 1, len 4).
    // S(a) = (2/2)·((10−0) + (10−2)) = 18, S(b) = (2/2)·(10−1) = 9.
    assert_eq!(r.scores, vec![("a".to_string(), 18.0), ("b".to_string(), 9.0)]);
    assert_eq!(r.verticals, ["a"]);
    assert_eq!(r.cost, 3);
    assert_eq!(c.get(), 3);
}

#[test]
fn ranks_hand_computed() {
    let cfg = VerticalConfig::from_json(r#"{"verticals":{"a":["sa"],"b":["sb"]}}"#).unwrap();
    let docs = vec![
        Document::new("1", 0, "sa", "storm storm"),
        Document::new("2", 0, "sb", "storm rain"),
    ];
    let vs = VerticalSet::build(docs, &cfg).unwrap();
    let csi = build_csi(&vs, 1.0, 0).unwrap();
    let q = QueryModel::from_text("storm").unwrap();
    let p = RankSParams {
        base: 5.0,
        min_ranks: 1e-6,
        gamma: 10,
    };
    let r = ranks_select(&q, &csi, &p, MU, &mut PostingsCounter::new()).unwrap();
    let p_bg = 3.0 / 4.0;
    let s1 = ((2.0 + MU * p_bg) / (2.0 + MU)).ln();
    let s2 = ((1.0 + MU * p_bg) / (2.0 + MU)).ln();
    let w1 = 1.0 / (1.0 + (s2 - s1).exp());
    let w2 = 1.0 - w1;
    let scores: HashMap<_, _> = r.scores.iter().cloned().collect();
    assert!((scores["a"] - w1).abs() < 1e-12);
    assert!((scores["b"] - w2 / 5.0).abs() < 1e-12);
    assert_eq!(r.verticals, ["a", "b"]);
}

#[test]
fn crcs_all_verticals_at_full_rate_reproduces_union_feedback() {
    let corpus = small_corpus(8);
    let vs = VerticalSet::build(corpus.docs.clone(), &corpus.config).unwrap();
    let csi = build_csi(&vs, 1.0, 1).unwrap();
    let union = vs.union_index();
    let broker = Broker {
        verticals: &vs,
        csi: Some(&csi),
        taily: None,
        selector: Selector::Crcs(CrcsParams { gamma: 50, m: vs.len() }),
    };
    for i in 0..30 {
        let q = pick_query(&corpus, &[i * 7, i * 13 + 1]);
        let (a, _) = broker.feedback(&q, 50, MU).unwrap();
        let (b, _) = IndexFeedback { index: &union, label: "u" }.feedback(&q, 50, MU).unwrap();
        assert_eq!(a.ids().collect::<Vec<_>>(), b.ids().collect::<Vec<_>>());
    }
}

#[test]
fn taily_moments_match_two_pass_oracle() {
    let corpus = small_corpus(5);
    let vs = VerticalSet::build(corpus.docs.clone(), &corpus.config).unwrap();
    let stats = taily_build(&vs, MU);
    let global = vs.global();
    let max_len = global.max_doc_len();
    for (v, tv) in vs.verticals().iter().zip(&stats.verticals) {
        assert_eq!(tv.num_docs, v.index.num_docs() as u64);
        for term in v.index.terms() {
            let p_bg = global.p_bg(term).unwrap();
            let floor = ((MU * p_bg) / (max_len as f64 + MU)).ln();
            let xs: Vec<f64> = v
                .index
                .docs()
                .filter_map(|(d, m)| {
                    let tf = v.index.tf(term, d).unwrap();
                    (tf > 0).then(|| ((tf as f64 + MU * p_bg) / (m.len as f64 + MU)).ln() - floor)
                })
                .collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let st = tv.terms[term];
            assert_eq!(st.df, xs.len() as u64);
            assert!((st.mean - mean).abs() <= 1e-10 * mean.abs().max(1.0), "{term}: {} vs {mean}", st.mean);
            assert!((st.var - var).abs() <= 1e-9 * var.max(1.0), "{term}: {} vs {var}", st.var);
            assert!(xs.iter().all(|&x| x >= -1e-12));
        }
    }
}

#[test]
fn taily_costs_one_lookup_per_vertical() {
    let corpus = small_corpus(2);
    let vs = VerticalSet::build(corpus.docs.clone(), &corpus.config).unwrap();
    let stats = taily_build(&vs, MU);
    let q = pick_query(&corpus, &[3, 70]);
    let r = taily_select(&q, &stats, &TailyParams::default()).unwrap();
    assert_eq!(r.cost, 5);
    assert!(!r.verticals.is_empty());
    assert!(taily_select(&q, &stats, &TailyParams { n: 0.0, v: 1.0 }).is_err());
    let path = tempfile::NamedTempFile::new().unwrap();
    stats.save(path.path()).unwrap();
    assert_eq!(TailyStats::load(path.path()).unwrap(), stats);
}

fn stats_strategy() -> impl Strategy<Value = TailyStats> {
    let term = (1u64..400, 0.5f64..8.0, 0.05f64..6.0);
    prop::collection::vec((400u64..3000, prop::collection::vec(term, 1..4)), 1..6).prop_map(|vs| TailyStats {
        mu: MU,
        verticals: vs
            .into_iter()
            .enumerate()
            .map(|(i, (n, terms))| TailyVertical {
                name: format!("v{i}"),
                num_docs: n,
                terms: terms
                    .into_iter()
                    .enumerate()
                    .map(|(t, (df, mean, var))| (format!("q{t}"), TermStat { df: df.min(n), mean, var }))
                    .collect(),
            })
            .collect(),
    })
}

proptest! {
    #[test]
    fn taily_threshold_balances_n(stats in stats_strategy(), n in 10.0f64..2000.0) {
        let q = QueryModel::from_terms(["q0", "q1", "q2"]).unwrap();
        let est = taily_estimate(&q, &stats, n);
        let total: f64 = est.estimates.iter().sum();
        let candidates: f64 = est.models.iter().flatten().map(|m| m.candidates).sum();
        if est.interior {
            prop_assert!((total - n).abs() <= 1e-3 * n, "{total} vs {n}");
        } else {
            prop_assert!(candidates <= n);
            prop_assert!((total - candidates).abs() <= 1e-9 * candidates.max(1.0));
        }
        for (m, t) in est.models.iter().zip(&est.estimates) {
            if let Some(m) = m {
                prop_assert!(*t <= m.candidates + 1e-9 && *t >= 0.0);
            }
        }
    }

    #[test]
    fn ranks_selection_shrinks_with_threshold(seed in 0u64..20, a in 0usize..200, b in 0usize..200, lo in -9.0f64..-1.0, gap in 0.0f64..4.0) {
        let corpus = small_corpus(seed % 4);
        let vs = VerticalSet::build(corpus.docs.clone(), &corpus.config).unwrap();
        let csi = build_csi(&vs, 0.3, seed).unwrap();
        let q = pick_query(&corpus, &[a, b]);
        let loose = RankSParams { min_ranks: 10f64.powf(lo), ..RankSParams::default() };
        let strict = RankSParams { min_ranks: 10f64.powf(lo + gap), ..RankSParams::default() };
        let l = ranks_select(&q, &csi, &loose, MU, &mut PostingsCounter::new()).unwrap();
        let s = ranks_select(&q, &csi, &strict, MU, &mut PostingsCounter::new()).unwrap();
        prop_assert!(s.verticals.len() <= l.verticals.len());
        prop_assert!(s.verticals.iter().all(|v| l.verticals.contains(v)));
        prop_assert_eq!(l.cost, csi.index().postings_cost(&q));
    }

    #[test]
    fn crcs_returns_m_distinct_verticals(seed in 0u64..20, a in 0usize..200, m in 1usize..=5) {
        let corpus = small_corpus(seed % 4);
        let vs = VerticalSet::build(corpus.docs.clone(), &corpus.config).unwrap();
        let csi = build_csi(&vs, 0.2, seed).unwrap();
        let q = pick_query(&corpus, &[a]);
        let r = crcs_select(&q, &csi, &CrcsParams { gamma: 50, m }, MU, &mut PostingsCounter::new()).unwrap();
        prop_assert_eq!(r.verticals.len(), m);
        let mut uniq = r.verticals.clone();
        uniq.sort();
        uniq.dedup();
        prop_assert_eq!(uniq.len(), m);
    }
}
