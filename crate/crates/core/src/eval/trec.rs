//! TREC exchange formats: qrels, topics and run files.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Graded judgments: 0 not relevant, 1 relevant, 2 highly relevant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, HashMap<String, u8>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, topic: &str, doc: &str, grade: u8) -> Result<()> {
        if grade > 2 {
            return Err(Error::Parse("qrels".into(), format!("grade {grade} outside 0..=2")));
        }
        self.judgments.entry(topic.to_string()).or_default().insert(doc.to_string(), grade);
        Ok(())
    }

    /// Parse whitespace-separated `topic 0 docid grade` lines.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut q = Qrels::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse("qrels".into(), e.to_string()))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let err = |m: &str| Error::Parse("qrels".into(), format!("line {}: {m}", i + 1));
            if fields.len() != 4 {
                return Err(err("expected `topic 0 docid grade`"));
            }
            let grade: u8 = fields[3].parse().map_err(|_| err("grade is not 0, 1 or 2"))?;
            q.insert(fields[0], fields[2], grade).map_err(|_| err("grade is not 0, 1 or 2"))?;
        }
        Ok(q)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(f))
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (topic, docs) in &self.judgments {
            let mut docs: Vec<_> = docs.iter().collect();
            docs.sort();
            for (doc, grade) in docs {
                writeln!(out, "{topic} 0 {doc} {grade}")?;
            }
        }
        Ok(())
    }

    pub fn has_topic(&self, topic: &str) -> bool {
        self.judgments.contains_key(topic)
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn judged(&self, topic: &str) -> Result<&HashMap<String, u8>> {
        self.judgments.get(topic).ok_or_else(|| Error::UnknownTopic(topic.to_string()))
    }

    pub fn grade(&self, topic: &str, doc: &str) -> u8 {
        self.judgments
            .get(topic)
            .and_then(|d| d.get(doc))
            .copied()
            .unwrap_or(0)
    }

    /// Number of documents with grade ≥ 1.
    pub fn num_relevant(&self, topic: &str) -> usize {
        self.judgments
            .get(topic)
            .map_or(0, |d| d.values().filter(|&&g| g >= 1).count())
    }
}

impl std::fmt::Display for RunFile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for r in &self.rows {
            writeln!(f, "{} Q0 {} {} {} {}", r.topic, r.doc, r.rank, r.score, r.tag)?;
        }
        Ok(())
    }
}

/// A query with its issue time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub id: String,
    pub query: String,
    pub timestamp: u64,
}

/// Read JSON-lines `{id, query, timestamp}` topics.
pub fn read_topics(path: impl AsRef<Path>) -> Result<Vec<Topic>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_topics(BufReader::new(f))
}

pub fn parse_topics<R: BufRead>(reader: R) -> Result<Vec<Topic>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse("topics".into(), e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Topic = serde_json::from_str(&line).map_err(|e| Error::Parse("topics".into(), format!("line {}: {e}", i + 1)))?;
        out.push(t);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub topic: String,
    pub doc: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Rows of a TREC run (`topic Q0 docid rank score tag`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFile {
    pub rows: Vec<RunRow>,
}

impl RunFile {
    /// Append one topic's ranking; ranks are assigned 1..n.
    pub fn push_ranking<'a>(&mut self, topic: &str, tag: &str, ranking: impl IntoIterator<Item = (&'a str, f64)>) {
        for (i, (doc, score)) in ranking.into_iter().enumerate() {
            self.rows.push(RunRow {
                topic: topic.to_string(),
                doc: doc.to_string(),
                rank: i + 1,
                score,
                tag: tag.to_string(),
            });
        }
    }

    /// Ranked document ids of one topic.
    pub fn ranking(&self, topic: &str) -> Vec<&str> {
        self.rows.iter().filter(|r| r.topic == topic).map(|r| r.doc.as_str()).collect()
    }

    pub fn emit<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.rows {
            writeln!(out, "{} Q0 {} {} {} {}", r.topic, r.doc, r.rank, r.score, r.tag)?;
        }
        Ok(())
    }


    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse("run".into(), e.to_string()))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() {
                continue;
            }
            let err = |m: &str| Error::Parse("run".into(), format!("line {}: {m}", i + 1));
            if f.len() != 6 {
                return Err(err("expected `topic Q0 docid rank score tag`"));
            }
            rows.push(RunRow {
                topic: f[0].to_string(),
                doc: f[2].to_string(),
                rank: f[3].parse().map_err(|_| err("bad rank"))?,
                score: f[4].parse().map_err(|_| err("bad score"))?,
                tag: f[5].to_string(),
            });
        }
        let run = RunFile { rows };
        run.validate()?;
        Ok(run)
    }

    /// Ranks contiguous from 1 and scores non-increasing within each topic.
    pub fn validate(&self) -> Result<()> {
        let mut last: HashMap<&str, (usize, f64)> = HashMap::new();
        for r in &self.rows {
            let expected = last.get(r.topic.as_str()).map_or(1, |(rank, _)| rank + 1);
            if r.rank != expected {
                return Err(Error::Parse("run".into(), format!("topic {} rank {} out of sequence", r.topic, r.rank)));
            }
            if let Some((_, prev)) = last.get(r.topic.as_str()) {
                if r.score > *prev {
                    return Err(Error::Parse("run".into(), format!("topic {} scores increase at rank {}", r.topic, r.rank)));
                }
            }
            last.insert(&r.topic, (r.rank, r.score));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn qrels_parse() {
        let q = Qrels::parse("MB01 0 d1 1\nMB01 0 d2 0\n\nMB01 0 d3 2\nMB02 0 d2 2\n".as_bytes()).unwrap();
        assert_eq!(q.num_relevant("MB01"), 2);
        assert_eq!(q.grade("MB01", "d3"), 2);
        assert_eq!(q.grade("MB01", "zz"), 0);
        assert!(Qrels::parse("MB01 0 d1 3\n".as_bytes()).is_err());
        assert!(Qrels::parse("MB01 d1 1\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        q.write(&mut buf).unwrap();
        assert_eq!(Qrels::parse(buf.as_slice()).unwrap(), q);
    }

    #[test]
    fn topics_parse() {
        let t = parse_topics("{\"id\":\"MB01\",\"query\":\"pope\",\"timestamp\":5}\n\n".as_bytes()).unwrap();
        assert_eq!(t, vec![Topic { id: "MB01".into(), query: "pope".into(), timestamp: 5 }]);
        assert!(parse_topics("{\"id\":\"MB01\",\"query\":\"pope\"}".as_bytes()).is_err());
    }

    #[test]
    fn run_validation() {
        assert!(RunFile::parse("1 Q0 a 1 -1 t\n1 Q0 b 3 -2 t\n".as_bytes()).is_err());
        assert!(RunFile::parse("1 Q0 a 1 -2 t\n1 Q0 b 2 -1 t\n".as_bytes()).is_err());
        assert!(RunFile::parse("1 Q0 a 1 -2 t\n2 Q0 b 1 -1 t\n".as_bytes()).is_ok());
    }

    proptest! {
        #[test]
        fn run_round_trip(scores in prop::collection::vec(-1e6f64..1e6, 0..40), topics in 1usize..4) {
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let mut run = RunFile::default();
            for t in 0..topics {
                let ids: Vec<String> = (0..sorted.len()).map(|i| format!("d{t}_{i}")).collect();
                run.push_ranking(&format!("MB{t:02}"), "tag", ids.iter().map(String::as_str).zip(sorted.iter().copied()));
            }
            let back = RunFile::parse(run.to_string().as_bytes()).unwrap();
            prop_assert_eq!(back, run);
        }
    }
}
