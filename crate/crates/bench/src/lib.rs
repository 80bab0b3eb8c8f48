//! Shared fixture for the criterion benchmarks in `benches/`.

use prvf_core::synthetic::{benchmark, Benchmark, BenchmarkSpec};
use prvf_core::{build_csi, build_index, taily_build, Csi, InvertedIndex, QueryModel, TailyStats, VerticalSet};

pub struct Fixture {
    pub bench: Benchmark,
    pub target: InvertedIndex,
    pub news: VerticalSet,
    pub union: InvertedIndex,
    pub csi: Csi,
    pub taily: TailyStats,
    pub queries: Vec<QueryModel>,
}

impl Fixture {
    /// The standard synthetic benchmark, fully indexed.
    pub fn standard(seed: u64) -> Self {
        let bench = benchmark(&BenchmarkSpec::standard(seed));
        let target = build_index(bench.tweets.clone()).expect("target index");
        let news = VerticalSet::build(bench.news.clone(), &bench.config).expect("vertical set");
        let union = news.union_index();
        let csi = build_csi(&news, 0.12, 7).expect("csi");
        let taily = taily_build(&news, prvf_core::DEFAULT_MU);
        let queries = bench
            .topics
            .iter()
            .map(|t| QueryModel::from_text(&t.query).expect("topic query"))
            .collect();
        Fixture {
            bench,
            target,
            news,
            union,
            csi,
            taily,
            queries,
        }
    }
}
