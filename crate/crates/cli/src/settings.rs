//! Effective configuration: built-in defaults, then an optional TOML file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use prvf_core::eval::SweepAxis;
use prvf_core::selection::{CrcsParams, RankSParams, TailyParams};
use prvf_core::{ExpansionParams, Method, Selector, TimeWindow};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub paths: Paths,
    pub expansion: Expansion,
    pub csi: CsiSettings,
    pub crcs: Crcs,
    pub ranks: RankS,
    pub taily: Taily,
    pub window: Window,
    pub evaluate: Evaluate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub news: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verticals: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topics: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qrels: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            out: PathBuf::from("out"),
            news: None,
            verticals: None,
            target: None,
            external: None,
            topics: None,
            qrels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expansion {
    pub fb_docs: usize,
    pub terms: usize,
    pub lambda: f64,
    pub mu: f64,
    /// Feedback depth when expanding from the external index.
    pub external_fb_docs: usize,
    pub depth: usize,
}

impl Default for Expansion {
    fn default() -> Self {
        let p = ExpansionParams::default();
        let e = prvf_core::ExperimentConfig::default();
        Expansion {
            fb_docs: p.fb_docs,
            terms: p.num_terms,
            lambda: p.lambda,
            mu: p.mu,
            external_fb_docs: e.external_fb_docs,
            depth: e.depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsiSettings {
    pub rate: f64,
    pub seed: u64,
}

impl Default for CsiSettings {
    fn default() -> Self {
        CsiSettings { rate: 0.12, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Crcs {
    pub gamma: usize,
}

impl Default for Crcs {
    fn default() -> Self {
        Crcs {
            gamma: CrcsParams::default().gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankS {
    pub base: f64,
    pub threshold: f64,
    pub gamma: usize,
}

impl Default for RankS {
    fn default() -> Self {
        let p = RankSParams::default();
        RankS {
            base: p.base,
            threshold: p.min_ranks,
            gamma: p.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Taily {
    pub n: f64,
    pub v: f64,
}

impl Default for Taily {
    fn default() -> Self {
        let p = TailyParams::default();
        Taily { n: p.n, v: p.v }
    }
}

/// Freshness window in seconds. Empty lists mean no constraint; more than one
/// value on an axis turns `evaluate` into a sweep over that axis.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Window {
    pub age_seconds: Vec<u64>,
    pub span_seconds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Evaluate {
    pub methods: Vec<String>,
    /// Selector used by a bare `prvf` method.
    pub selector: String,
    pub baseline: String,
}

impl Default for Evaluate {
    fn default() -> Self {
        Evaluate {
            methods: vec!["no-prf".into(), "prf.news".into(), "prvf".into()],
            selector: "taily".into(),
            baseline: prvf_core::ExperimentConfig::default().baseline,
        }
    }
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn expansion_params(&self) -> ExpansionParams {
        ExpansionParams {
            fb_docs: self.expansion.fb_docs,
            num_terms: self.expansion.terms,
            lambda: self.expansion.lambda,
            mu: self.expansion.mu,
        }
    }

    /// Attach the configured parameters to a selector parsed by name.
    pub fn configure(&self, s: Selector) -> Selector {
        match s {
            Selector::Crcs(p) => Selector::Crcs(CrcsParams {
                gamma: self.crcs.gamma,
                m: p.m,
            }),
            Selector::RankS(_) => Selector::RankS(RankSParams {
                base: self.ranks.base,
                min_ranks: self.ranks.threshold,
                gamma: self.ranks.gamma,
            }),
            Selector::Taily(_) => Selector::Taily(TailyParams {
                n: self.taily.n,
                v: self.taily.v,
            }),
            Selector::All => Selector::All,
        }
    }

    pub fn method(&self, name: &str) -> Result<Method> {
        let m = if name.trim().eq_ignore_ascii_case("prvf") {
            Method::Prvf(self.evaluate.selector.parse()?)
        } else {
            name.parse()?
        };
        Ok(match m {
            Method::Prvf(s) => Method::Prvf(self.configure(s)),
            other => other,
        })
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        let mut out: Vec<Method> = Vec::new();
        for name in &self.evaluate.methods {
            let m = self.method(name)?;
            if out.iter().any(|o| o.name() == m.name()) {
                bail!(prvf_core::Error::InvalidParam(format!("method `{m}` listed twice")));
            }
            out.push(m);
        }
        Ok(out)
    }

    /// The single window applied outside sweep mode.
    pub fn fixed_window(&self) -> Result<Option<TimeWindow>> {
        let w = &self.window;
        if w.age_seconds.len() > 1 || w.span_seconds.len() > 1 {
            bail!(prvf_core::Error::InvalidParam("several window values given outside sweep mode".into()));
        }
        if w.age_seconds.is_empty() && w.span_seconds.is_empty() {
            return Ok(None);
        }
        let age = w.age_seconds.first().copied().unwrap_or(0);
        Ok(Some(TimeWindow::new(age, w.span_seconds.first().copied())?))
    }

    /// The sweep requested by the window lists, if any.
    pub fn sweep(&self, forced: Option<SweepParam>) -> Result<Option<SweepAxis>> {
        let w = &self.window;
        let axis = match forced {
            Some(p) => Some(p),
            None => match (w.age_seconds.len() > 1, w.span_seconds.len() > 1) {
                (true, true) => bail!(prvf_core::Error::InvalidParam("only one of age and span can be swept".into())),
                (true, false) => Some(SweepParam::Age),
                (false, true) => Some(SweepParam::Span),
                (false, false) => None,
            },
        };
        Ok(match axis {
            None => None,
            Some(SweepParam::Age) => {
                if w.span_seconds.len() > 1 {
                    bail!(prvf_core::Error::InvalidParam("span must be fixed while sweeping age".into()));
                }
                if w.age_seconds.is_empty() {
                    bail!(prvf_core::Error::MissingInput("--age-seconds values to sweep".into()));
                }
                Some(SweepAxis::Age {
                    values: w.age_seconds.clone(),
                    span: w.span_seconds.first().copied(),
                })
            }
            Some(SweepParam::Span) => {
                if w.age_seconds.len() > 1 {
                    bail!(prvf_core::Error::InvalidParam("age must be fixed while sweeping span".into()));
                }
                if w.span_seconds.is_empty() {
                    bail!(prvf_core::Error::MissingInput("--span-seconds values to sweep".into()));
                }
                Some(SweepAxis::Span {
                    values: w.span_seconds.clone(),
                    age: w.age_seconds.first().copied().unwrap_or(0),
                })
            }
        })
    }

    pub fn indexes(&self) -> PathBuf {
        self.paths.out.join("indexes")
    }

    pub fn news_dir(&self) -> PathBuf {
        self.indexes().join("news")
    }

    pub fn target_index(&self) -> PathBuf {
        self.indexes().join("target.index.json")
    }

    pub fn external_index(&self) -> PathBuf {
        self.indexes().join("external.index.json")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Age,
    Span,
}
