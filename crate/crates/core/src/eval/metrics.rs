//! Ranking effectiveness metrics.
//!
//! Binary relevance (grade ≥ 1) for AP and recall; graded gains
//! 2^grade − 1 with a log2(i + 1) discount for NDCG.

use super::trec::Qrels;
use crate::error::Result;

pub const EVAL_DEPTH: usize = 1000;
pub const NDCG_DEPTH: usize = 30;

/// Mean of P@i over relevant ranks i within [`EVAL_DEPTH`], divided by the
/// total number of relevant documents. Zero when the topic has none.
pub fn average_precision<S: AsRef<str>>(ranking: &[S], qrels: &Qrels, topic: &str) -> Result<f64> {
    let judged = qrels.judged(topic)?;
    let r = judged.values().filter(|&&g| g >= 1).count();
    if r == 0 {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, doc) in ranking.iter().take(EVAL_DEPTH).enumerate() {
        if judged.get(doc.as_ref()).is_some_and(|&g| g >= 1) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / r as f64)
}

pub fn ndcg_at_k<S: AsRef<str>>(ranking: &[S], qrels: &Qrels, topic: &str, k: usize) -> Result<f64> {
    let judged = qrels.judged(topic)?;
    let gain = |g: u8| (1u32 << g) as f64 - 1.0;
    let discount = |i: usize| ((i + 2) as f64).log2();
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain(judged.get(d.as_ref()).copied().unwrap_or(0)) / discount(i))
        .sum();
    let mut grades: Vec<u8> = judged.values().copied().filter(|&g| g > 0).collect();
    grades.sort_unstable_by(|a, b| b.cmp(a));
    let ideal: f64 = grades.iter().take(k).enumerate().map(|(i, &g)| gain(g) / discount(i)).sum();
    Ok(if ideal > 0.0 { dcg / ideal } else { 0.0 })
}

/// Relevant documents within the first `depth` ranks over all relevant.
pub fn recall_at_depth<S: AsRef<str>>(ranking: &[S], qrels: &Qrels, topic: &str, depth: usize) -> Result<f64> {
    let judged = qrels.judged(topic)?;
    let r = judged.values().filter(|&&g| g >= 1).count();
    if r == 0 {
        return Ok(0.0);
    }
    let found = ranking
        .iter()
        .take(depth)
        .filter(|d| judged.get(d.as_ref()).is_some_and(|&g| g >= 1))
        .count();
    Ok(found as f64 / r as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn qrels(rows: &[(&str, u8)]) -> Qrels {
        let mut q = Qrels::new();
        for (d, g) in rows {
            q.insert("t", d, *g).unwrap();
        }
        q
    }

    #[test]
    fn perfect_ranking() {
        let q = qrels(&[("a", 1), ("b", 2), ("c", 0)]);
        assert_eq!(average_precision(&["a", "b", "c"], &q, "t").unwrap(), 1.0);
        assert!((ndcg_at_k(&["b", "a", "c"], &q, "t", 30).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(recall_at_depth(&["a", "b"], &q, "t", 1000).unwrap(), 1.0);
    }

    #[test]
    fn single_relevant_at_rank_two() {
        let q = qrels(&[("a", 1)]);
        assert_eq!(average_precision(&["x", "a"], &q, "t").unwrap(), 0.5);
    }

    #[test]
    fn no_relevant() {
        let q = qrels(&[("a", 0)]);
        assert_eq!(ndcg_at_k(&["a"], &q, "t", 30).unwrap(), 0.0);
        assert_eq!(average_precision(&["a"], &q, "t").unwrap(), 0.0);
    }

    #[test]
    fn half_recall() {
        let q = qrels(&[("a", 1), ("b", 1)]);
        assert_eq!(recall_at_depth(&["a", "x"], &q, "t", 1000).unwrap(), 0.5);
        assert_eq!(recall_at_depth(&["x", "a"], &q, "t", 1).unwrap(), 0.0);
    }

    #[test]
    fn graded_toy_case() {
        let q = qrels(&[("a", 2), ("b", 0), ("c", 1)]);
        let dcg = 3.0 + 0.0 + 1.0 / 2.0;
        let idcg = 3.0 + 1.0 / 3f64.log2();
        let got = ndcg_at_k(&["a", "b", "c"], &q, "t", 3).unwrap();
        assert!((got - dcg / idcg).abs() < 1e-15, "{got}");
    }

    #[test]
    fn unknown_topic() {
        let q = qrels(&[("a", 1)]);
        assert!(matches!(average_precision(&["a"], &q, "zz"), Err(Error::UnknownTopic(_))));
        assert!(ndcg_at_k(&["a"], &q, "zz", 30).is_err());
        assert!(recall_at_depth(&["a"], &q, "zz", 10).is_err());
    }

    #[test]
    fn ap_counts_only_top_thousand() {
        let q = qrels(&[("rel", 1)]);
        let mut ranking: Vec<String> = (0..1000).map(|i| format!("n{i}")).collect();
        ranking.push("rel".into());
        assert_eq!(average_precision(&ranking, &q, "t").unwrap(), 0.0);
    }
}
