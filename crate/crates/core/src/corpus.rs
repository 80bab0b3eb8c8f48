//! Document ingestion and source-to-vertical assignment.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::tokenize;

/// One timestamped post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Document {
    pub id: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: u64,
    pub source: String,
    pub text: String,
    #[serde(skip)]
    pub tokens: Vec<String>,
}

#[derive(Deserialize)]
struct RawDocument {
    id: String,
    timestamp: u64,
    source: String,
    text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, timestamp: u64, source: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Document {
            id: id.into(),
            timestamp,
            source: source.into(),
            text,
            tokens,
        }
    }

    /// Serialize as one JSON line (without the trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("document serialization is infallible")
    }

    /// Parse a single JSON line.
    pub fn from_json_line(line: &str) -> std::result::Result<Self, serde_json::Error> {
        let raw: RawDocument = serde_json::from_str(line)?;
        Ok(Document::new(raw.id, raw.timestamp, raw.source, raw.text))
    }
}

/// Streaming reader over a JSON-lines corpus.
///
/// Yields documents in file order, skips blank lines and rejects duplicate ids.
pub struct DocumentReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    seen: HashSet<String>,
    failed: bool,
}

impl<R: BufRead> DocumentReader<R> {
    pub fn new(reader: R) -> Self {
        DocumentReader {
            lines: reader.lines(),
            line_no: 0,
            seen: HashSet::new(),
            failed: false,
        }
    }
}

impl<R: BufRead> Iterator for DocumentReader<R> {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(line) => line,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(Error::MalformedLine {
                        line: self.line_no,
                        message: e.to_string(),
                    }));
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let doc = match Document::from_json_line(&line) {
                Ok(doc) => doc,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(Error::MalformedLine {
                        line: self.line_no,
                        message: e.to_string(),
                    }));
                }
            };
            if !self.seen.insert(doc.id.clone()) {
                self.failed = true;
                return Some(Err(Error::DuplicateId(doc.id)));
            }
            return Some(Ok(doc));
        }
    }
}

/// Open a JSON-lines corpus file as a document stream.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<DocumentReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(DocumentReader::new(BufReader::new(file)))
}

/// Load a whole corpus into memory.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    load_jsonl(path)?.collect()
}

/// Assignment of source handles to named verticals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVerticalConfig", into = "RawVerticalConfig")]
pub struct VerticalConfig {
    verticals: BTreeMap<String, BTreeSet<String>>,
    default: Option<String>,
    owner: HashMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct RawVerticalConfig {
    verticals: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    default: Option<String>,
}

impl TryFrom<RawVerticalConfig> for VerticalConfig {
    type Error = Error;

    fn try_from(raw: RawVerticalConfig) -> Result<Self> {
        VerticalConfig::new(raw.verticals, raw.default)
    }
}

impl From<VerticalConfig> for RawVerticalConfig {
    fn from(cfg: VerticalConfig) -> Self {
        RawVerticalConfig {
            verticals: cfg
                .verticals
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
            default: cfg.default,
        }
    }
}

impl VerticalConfig {
    /// Build and validate a config. A default vertical that is not listed is
    /// added with no explicit sources.
    pub fn new<I, S>(verticals: I, default: Option<String>) -> Result<Self>
    where
        I: IntoIterator<Item = (String, S)>,
        S: IntoIterator<Item = String>,
    {
        let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut owner = HashMap::new();
        for (name, sources) in verticals {
            if name.trim().is_empty() {
                return Err(Error::InvalidConfig("empty vertical name".into()));
            }
            if map.contains_key(&name) {
                return Err(Error::InvalidConfig(format!("duplicate vertical `{name}`")));
            }
            let mut set = BTreeSet::new();
            for source in sources {
                if let Some(prev) = owner.get(&source) {
                    if prev != &name {
                        return Err(Error::InvalidConfig(format!(
                            "source `{source}` assigned to both `{prev}` and `{name}`"
                        )));
                    }
                }
                owner.insert(source.clone(), name.clone());
                set.insert(source);
            }
            map.insert(name, set);
        }
        if let Some(d) = &default {
            if d.trim().is_empty() {
                return Err(Error::InvalidConfig("empty default vertical name".into()));
            }
            map.entry(d.clone()).or_default();
        }
        if map.is_empty() {
            return Err(Error::InvalidConfig("no verticals".into()));
        }
        Ok(VerticalConfig {
            verticals: map,
            default,
            owner,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// The nine news verticals and their 70 Twitter accounts.
    pub fn news_sources() -> Self {
        const TABLE: &[(&str, &[&str])] = &[
            (
                "general",
                &[
                    "abc", "ap", "bbcnews", "bbcworld", "cbsnews", "cnn", "cnni", "foxnews",
                    "huffingtonpost", "latimes", "nprnews", "nytimes", "reuters", "reutersuk",
                    "usatoday", "mashable",
                ],
            ),
            ("politics", &["huffpostpol", "politico", "theeconomist", "washingtonpost", "wsj"]),
            (
                "technology",
                &[
                    "arstechnica", "cnet", "gizmodo", "techcrunch", "wired", "wireduk",
                    "thenextweb", "techrepublic", "gigaom", "macworld",
                ],
            ),
            ("sports", &["bbcsport", "sinow", "eurosport", "eurosportuktv", "sportscenter", "espn"]),
            (
                "music",
                &[
                    "clash_music", "rollingstone", "nme", "spinmagazine", "stereogum", "billboard",
                    "altpress", "pitchfork",
                ],
            ),
            (
                "movies",
                &[
                    "americancine", "thr", "nytmovies", "bbcfilms", "totalfilm", "guardianfilm",
                    "backstage", "empiremagazine", "filmcomment", "timeoutfilm", "sightsoundmag",
                ],
            ),
            ("entertainment", &["time", "ew", "variety", "vanityfair", "uncutmagazine"]),
            ("science", &["livescience", "popsci", "wiredscience", "nasa", "natgeo", "newscientist"]),
            ("breaking", &["bbcbreaking", "breakingnews", "cnnbrk"]),
        ];
        VerticalConfig::new(
            TABLE.iter().map(|(name, sources)| {
                (name.to_string(), sources.iter().map(|s| s.to_string()).collect::<Vec<_>>())
            }),
            None,
        )
        .expect("built-in table is valid")
    }

    /// Vertical names in ascending order.
    pub fn vertical_names(&self) -> impl Iterator<Item = &str> {
        self.verticals.keys().map(String::as_str)
    }

    pub fn num_verticals(&self) -> usize {
        self.verticals.len()
    }

    pub fn sources(&self, vertical: &str) -> Option<&BTreeSet<String>> {
        self.verticals.get(vertical)
    }

    pub fn default_vertical(&self) -> Option<&str> {
        self.default.as_deref()
    }

    /// Vertical owning `source`, falling back to the default vertical.
    pub fn vertical_of(&self, source: &str) -> Result<&str> {
        match self.owner.get(source) {
            Some(v) => Ok(v.as_str()),
            None => self
                .default
                .as_deref()
                .ok_or_else(|| Error::UnmappedSource(source.to_string())),
        }
    }
}

pub fn assign_vertical<'c>(doc: &Document, cfg: &'c VerticalConfig) -> Result<&'c str> {
    cfg.vertical_of(&doc.source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn reader(text: &str) -> DocumentReader<Cursor<Vec<u8>>> {
        DocumentReader::new(Cursor::new(text.as_bytes().to_vec()))
    }

    #[test]
    fn empty_file() {
        assert_eq!(reader("").count(), 0);
    }

    #[test]
    fn three_lines_in_order() {
        let text = r##"{"id":"1","timestamp":10,"source":"cnn","text":"Hello World"}
{"id":"2","timestamp":20,"source":"espn","text":"goal!","extra":true}

{"id":"3","timestamp":30,"source":"wired","text":"#tech news"}
"##;
        let docs: Vec<_> = reader(text).collect::<Result<_>>().unwrap();
        assert_eq!(docs.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["1", "2", "3"]);
        assert_eq!(docs[0].tokens, ["hello", "world"]);
        assert_eq!(docs[2].tokens, ["tech", "news"]);
    }

    #[test]
    fn missing_timestamp_names_line() {
        let text = "{\"id\":\"1\",\"timestamp\":1,\"source\":\"a\",\"text\":\"x\"}\n{\"id\":\"2\",\"source\":\"a\",\"text\":\"y\"}\n";
        let mut it = reader(text);
        assert!(it.next().unwrap().is_ok());
        match it.next().unwrap() {
            Err(Error::MalformedLine { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("timestamp"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(it.next().is_none());
    }

    #[test]
    fn negative_timestamp_rejected() {
        let text = "{\"id\":\"1\",\"timestamp\":-5,\"source\":\"a\",\"text\":\"x\"}";
        assert!(matches!(reader(text).next(), Some(Err(Error::MalformedLine { line: 1, .. }))));
    }

    #[test]
    fn duplicate_id_is_an_error() {
        let text = "{\"id\":\"7\",\"timestamp\":1,\"source\":\"a\",\"text\":\"x\"}\n{\"id\":\"7\",\"timestamp\":2,\"source\":\"a\",\"text\":\"y\"}";
        let res: Result<Vec<_>> = reader(text).collect();
        match res {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "7"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_line_round_trip() {
        let doc = Document::new("42", 1_360_000_000, "bbcnews", "Pope \"Benedict\" resigns\n#pope");
        let back = Document::from_json_line(&doc.to_json_line()).unwrap();
        assert_eq!(doc, back);
    }

    #[test]
    fn table_one_assignment() {
        let cfg = VerticalConfig::news_sources();
        assert_eq!(cfg.num_verticals(), 9);
        let espn = Document::new("1", 0, "espn", "");
        let politico = Document::new("2", 0, "politico", "");
        let wired = Document::new("3", 0, "wired", "");
        assert_eq!(assign_vertical(&espn, &cfg).unwrap(), "sports");
        assert_eq!(assign_vertical(&politico, &cfg).unwrap(), "politics");
        assert_eq!(assign_vertical(&wired, &cfg).unwrap(), "technology");
        let unknown = Document::new("4", 0, "unknown", "");
        assert!(matches!(assign_vertical(&unknown, &cfg), Err(Error::UnmappedSource(s)) if s == "unknown"));
        let total: usize = cfg.vertical_names().map(|v| cfg.sources(v).unwrap().len()).sum();
        assert_eq!(total, 70);
    }

    #[test]
    fn default_vertical_catches_unmapped() {
        let cfg = VerticalConfig::from_json(r#"{"verticals":{"sports":["espn"]},"default":"general"}"#).unwrap();
        let doc = Document::new("1", 0, "someone", "");
        assert_eq!(assign_vertical(&doc, &cfg).unwrap(), "general");
        assert_eq!(cfg.vertical_names().collect::<Vec<_>>(), ["general", "sports"]);
    }

    #[test]
    fn config_validation() {
        assert!(VerticalConfig::from_json(r#"{"verticals":{"a":["x"],"b":["x"]}}"#).is_err());
        assert!(VerticalConfig::from_json(r#"{"verticals":{"":["x"]}}"#).is_err());
        assert!(VerticalConfig::from_json(r#"{"verticals":{}}"#).is_err());
        let cfg = VerticalConfig::from_json(r#"{"verticals":{"a":["x","x"]},"default":null}"#).unwrap();
        assert_eq!(cfg.sources("a").unwrap().len(), 1);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(VerticalConfig::from_json(&json).unwrap(), cfg);
    }
}
