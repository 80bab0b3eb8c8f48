//! Seeded synthetic corpora for tests, benchmarks and demos.
//!
//! Two generators: small clustered corpora with random vocabularies, and a
//! microblog-style benchmark (news verticals, a tweet target corpus, topics
//! and graded judgments) with optional temporal drift of event vocabulary.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::corpus::{Document, VerticalConfig};
use crate::eval::trec::{Qrels, Topic};

/// Query time used by every generated topic (2013-02-01 00:00 UTC).
pub const BASE_TIME: u64 = 1_359_676_800;
const DAY: u64 = 86_400;

struct ZipfVocab {
    terms: Vec<String>,
    dist: Zipf<f64>,
}

impl ZipfVocab {
    fn new(terms: Vec<String>, s: f64) -> Self {
        let dist = Zipf::new(terms.len() as f64, s).expect("non-empty vocabulary");
        ZipfVocab { terms, dist }
    }

    fn sample<'a>(&'a self, rng: &mut impl Rng) -> &'a str {
        let r = self.dist.sample(rng) as usize;
        &self.terms[r.clamp(1, self.terms.len()) - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteredSpec {
    pub docs: usize,
    pub verticals: usize,
    /// Terms per cluster vocabulary; a shared vocabulary of the same size is added.
    pub vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for ClusteredSpec {
    fn default() -> Self {
        ClusteredSpec {
            docs: 2000,
            verticals: 9,
            vocab: 150,
            min_len: 3,
            max_len: 25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusteredCorpus {
    pub docs: Vec<Document>,
    pub config: VerticalConfig,
    /// Every term that can occur, shared terms first.
    pub vocabulary: Vec<String>,
}

/// Small corpus whose documents mix a shared Zipfian vocabulary with one
/// cluster vocabulary each; one source per vertical. Doc ids are shuffled
/// so that id order and vertical order disagree.
pub fn clustered_corpus(seed: u64, spec: &ClusteredSpec) -> ClusteredCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shared = ZipfVocab::new((0..spec.vocab).map(|i| format!("w{i}")).collect(), 1.0);
    let clusters: Vec<ZipfVocab> = (0..spec.verticals)
        .map(|c| ZipfVocab::new((0..spec.vocab).map(|i| format!("c{c}t{i}")).collect(), 0.9))
        .collect();
    let mut ids: Vec<usize> = (0..spec.docs).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let docs = ids
        .iter()
        .map(|&id| {
            let c = rng.random_range(0..spec.verticals);
            let len = rng.random_range(spec.min_len..=spec.max_len);
            let text: Vec<&str> = (0..len)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        shared.sample(&mut rng)
                    } else {
                        clusters[c].sample(&mut rng)
                    }
                })
                .collect();
            Document::new(format!("d{id:05}"), rng.random_range(0..1_000_000), format!("src{c}"), text.join(" "))
        })
        .collect();
    let config = VerticalConfig::new((0..spec.verticals).map(|c| (format!("v{c}"), vec![format!("src{c}")])), None)
        .expect("distinct generated names");
    let mut vocabulary = shared.terms.clone();
    for c in &clusters {
        vocabulary.extend(c.terms.iter().cloned());
    }
    ClusteredCorpus { docs, config, vocabulary }
}

/// Vocabulary drift of event terms over time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSpec {
    /// Number of consecutive time slices before the query time.
    pub phases: usize,
    /// Length of one slice in seconds.
    pub phase_len: u64,
    /// Event terms that fall out of use per slice.
    pub shift: usize,
    /// Event documents per topic and slice.
    pub docs_per_phase: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub seed: u64,
    pub clusters: usize,
    pub news_docs: usize,
    pub tweets: usize,
    pub external_docs: usize,
    pub topics: usize,
    pub general_vocab: usize,
    pub cluster_vocab: usize,
    /// Event terms in use at any one time, besides the core event term.
    pub event_window: usize,
    /// Event documents per topic in the news corpus (without drift).
    pub event_docs: usize,
    pub relevant_per_topic: usize,
    pub nonrelevant_per_topic: usize,
    /// Fraction of event documents published outside their home vertical.
    pub leak: f64,
    pub drift: Option<DriftSpec>,
}

impl BenchmarkSpec {
    /// Nine clusters, 10k news documents, 50 topics.
    pub fn standard(seed: u64) -> Self {
        BenchmarkSpec {
            seed,
            clusters: 9,
            news_docs: 10_000,
            tweets: 4_000,
            external_docs: 1_500,
            topics: 50,
            general_vocab: 1_500,
            cluster_vocab: 400,
            event_window: 12,
            event_docs: 60,
            relevant_per_topic: 20,
            nonrelevant_per_topic: 20,
            leak: 0.05,
            drift: None,
        }
    }

    /// Like [`standard`](Self::standard) but with event vocabulary drifting
    /// away from the one used at query time, one slice per day.
    pub fn drifting(seed: u64) -> Self {
        BenchmarkSpec {
            news_docs: 8_000,
            topics: 30,
            drift: Some(DriftSpec {
                phases: 5,
                phase_len: DAY,
                shift: 3,
                docs_per_phase: 20,
            }),
            ..Self::standard(seed)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub config: VerticalConfig,
    pub news: Vec<Document>,
    pub tweets: Vec<Document>,
    pub external: Vec<Document>,
    pub topics: Vec<Topic>,
    pub qrels: Qrels,
}

struct Topicality {
    home: usize,
    core: String,
    events: Vec<String>,
}

fn core_term(t: usize) -> String {
    format!("ev{t}core")
}

/// Source, tokens and optional (topic, grade) judgment.
type RawTweet = (String, Vec<String>, Option<(usize, u8)>);

/// Generate the benchmark described by `spec`.
pub fn benchmark(spec: &BenchmarkSpec) -> Benchmark {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let names: Vec<String> = VerticalConfig::news_sources()
        .vertical_names()
        .map(str::to_string)
        .chain((9..spec.clusters).map(|c| format!("cluster{c}")))
        .take(spec.clusters)
        .collect();
    let sources_per = 4;
    let source = |c: usize, rng: &mut ChaCha8Rng| format!("{}src{}", names[c], rng.random_range(0..sources_per));
    let config = VerticalConfig::new(
        names
            .iter()
            .map(|n| (n.clone(), (0..sources_per).map(|j| format!("{n}src{j}")).collect::<Vec<_>>())),
        None,
    )
    .expect("distinct generated names");

    let general = ZipfVocab::new((0..spec.general_vocab).map(|i| format!("g{i}")).collect(), 1.0);
    let clusters: Vec<ZipfVocab> = (0..spec.clusters)
        .map(|c| ZipfVocab::new((0..spec.cluster_vocab).map(|i| format!("c{c}w{i}")).collect(), 1.0))
        .collect();
    let (phases, shift) = spec.drift.map_or((1, 0), |d| (d.phases, d.shift));
    let event_len = spec.event_window + shift * (phases - 1);
    let topics: Vec<Topicality> = (0..spec.topics)
        .map(|t| Topicality {
            home: t % spec.clusters,
            core: core_term(t),
            events: (0..event_len).map(|i| format!("ev{t}x{i}")).collect(),
        })
        .collect();

    let fill = |rng: &mut ChaCha8Rng, out: &mut Vec<String>, c: usize, n: usize, p_cluster: f64| {
        for _ in 0..n {
            let w = if rng.random_bool(p_cluster) {
                clusters[c].sample(rng)
            } else {
                general.sample(rng)
            };
            out.push(w.to_string());
        }
    };
    let window = |phase: usize| phase * shift..phase * shift + spec.event_window;

    // News: event documents per topic (and phase), then background filler.
    let mut news_raw: Vec<(u64, String, Vec<String>)> = Vec::with_capacity(spec.news_docs);
    let span = spec.drift.map_or(30 * DAY, |d| d.phase_len * d.phases as u64);
    for topic in &topics {
        for phase in 0..phases {
            let count = spec.drift.map_or(spec.event_docs, |d| d.docs_per_phase);
            let (lo, hi) = match spec.drift {
                Some(d) => (BASE_TIME - (phase as u64 + 1) * d.phase_len, BASE_TIME - phase as u64 * d.phase_len),
                None => (BASE_TIME - span, BASE_TIME),
            };
            for _ in 0..count {
                let c = if rng.random_bool(spec.leak) {
                    rng.random_range(0..spec.clusters)
                } else {
                    topic.home
                };
                let mut toks = Vec::new();
                if rng.random_bool(0.9) {
                    toks.push(topic.core.clone());
                }
                let ev = &topic.events[window(phase)];
                for _ in 0..rng.random_range(4..=7) {
                    toks.push(ev.choose(&mut rng).expect("window").clone());
                }
                let n = rng.random_range(10..=20);
                fill(&mut rng, &mut toks, c, n, 0.55);
                news_raw.push((rng.random_range(lo..hi), source(c, &mut rng), toks));
            }
        }
    }
    while news_raw.len() < spec.news_docs {
        let c = rng.random_range(0..spec.clusters);
        let mut toks = Vec::new();
        let n = rng.random_range(15..=30);
        fill(&mut rng, &mut toks, c, n, 0.55);
        news_raw.push((rng.random_range(BASE_TIME - span..BASE_TIME), source(c, &mut rng), toks));
    }

    // Target tweets and judgments.
    let mut qrels = Qrels::new();
    let mut tweets_raw: Vec<RawTweet> = Vec::new();
    let mut queries = Vec::with_capacity(topics.len());
    for (t, topic) in topics.iter().enumerate() {
        let mut broad: Vec<usize> = Vec::new();
        while broad.len() < 2 {
            let r = rng.random_range(3..40);
            if !broad.contains(&r) {
                broad.push(r);
            }
        }
        let broad: Vec<String> = broad.iter().map(|&r| general.terms[r].clone()).collect();
        queries.push(format!("{} {} {}", topic.core, broad[0], broad[1]));
        let current = &topic.events[window(0)];
        for _ in 0..spec.relevant_per_topic {
            let mut toks = Vec::new();
            if rng.random_bool(0.35) {
                toks.push(topic.core.clone());
            }
            for _ in 0..rng.random_range(2..=4) {
                toks.push(current.choose(&mut rng).expect("window").clone());
            }
            for b in &broad {
                if rng.random_bool(0.3) {
                    toks.push(b.clone());
                }
            }
            let n = rng.random_range(4..=9);
            fill(&mut rng, &mut toks, topic.home, n, 0.3);
            let grade = if rng.random_bool(0.3) { 2 } else { 1 };
            tweets_raw.push((source(topic.home, &mut rng), toks, Some((t, grade))));
        }
        for i in 0..spec.nonrelevant_per_topic {
            let c = rng.random_range(0..spec.clusters);
            let mut toks = Vec::new();
            if i % 4 == 0 {
                toks.push(topic.core.clone());
            }
            for b in &broad {
                if rng.random_bool(0.7) {
                    toks.push(b.clone());
                }
            }
            let n = rng.random_range(5..=12);
            fill(&mut rng, &mut toks, c, n, 0.3);
            tweets_raw.push((source(c, &mut rng), toks, Some((t, 0))));
        }
    }
    while tweets_raw.len() < spec.tweets {
        let c = rng.random_range(0..spec.clusters);
        let mut toks = Vec::new();
        let n = rng.random_range(6..=16);
        fill(&mut rng, &mut toks, c, n, 0.4);
        tweets_raw.push((source(c, &mut rng), toks, None));
    }

    let news = assign_ids(&mut rng, "n", news_raw.into_iter());
    let mut judged = Vec::new();
    let tweets = assign_ids(
        &mut rng,
        "t",
        tweets_raw.into_iter().enumerate().map(|(i, (s, toks, j))| {
            if let Some(j) = j {
                judged.push((i, j));
            }
            (BASE_TIME - 1 - (i as u64 * 7919) % DAY, s, toks)
        }),
    );
    // `assign_ids` keeps input order, so positions still line up.
    for (i, (t, grade)) in judged {
        qrels.insert(&format!("MB{:03}", t + 1), &tweets[i].id, grade).expect("grade in range");
    }

    let mut external_raw = Vec::new();
    for topic in &topics {
        let mut toks = vec![topic.core.clone()];
        toks.extend(topic.events[window(phases - 1)].iter().take(4).cloned());
        let mut more = Vec::new();
        fill(&mut rng, &mut more, topic.home, 40, 0.5);
        toks.extend(more);
        external_raw.push((0, "wiki".to_string(), toks));
    }
    while external_raw.len() < spec.external_docs {
        let c = rng.random_range(0..spec.clusters);
        let mut toks = Vec::new();
        fill(&mut rng, &mut toks, c, 60, 0.5);
        external_raw.push((0, "wiki".to_string(), toks));
    }
    let external = assign_ids(&mut rng, "w", external_raw.into_iter());

    let topics = queries
        .into_iter()
        .enumerate()
        .map(|(t, query)| Topic {
            id: format!("MB{:03}", t + 1),
            query,
            timestamp: BASE_TIME,
        })
        .collect();
    Benchmark {
        config,
        news,
        tweets,
        external,
        topics,
        qrels,
    }
}

/// Ids are a random permutation of `prefix{0..n}` so id order carries no signal.
fn assign_ids(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    raw: impl Iterator<Item = (u64, String, Vec<String>)>,
) -> Vec<Document> {
    let raw: Vec<_> = raw.collect();
    let mut perm: Vec<usize> = (0..raw.len()).collect();
    for i in (1..perm.len()).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    raw.into_iter()
        .zip(perm)
        .map(|((ts, src, mut toks), id)| {
            for i in (1..toks.len()).rev() {
                toks.swap(i, rng.random_range(0..=i));
            }
            Document::new(format!("{prefix}{id:06}"), ts, src, toks.join(" "))
        })
        .collect()
}
