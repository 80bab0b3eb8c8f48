//! Federated pseudo-relevance feedback over vertically sharded news.
//!
//! The expansion step of PRF is routed to a few topical verticals chosen by
//! a resource selector instead of the whole news corpus, and the cost of
//! every step is counted in postings accessed.

pub mod corpus;
pub mod cost;
pub mod error;
pub mod eval;
pub mod federation;
pub mod index;
pub mod query;
pub mod relevance;
pub mod selection;
pub mod synthetic;
pub mod tokenize;

pub use corpus::{assign_vertical, read_corpus, Document, VerticalConfig};
pub use cost::{CostReport, CostSummary, ExpansionCost};
pub use error::{Error, Result};
pub use eval::{ExperimentConfig, ExperimentInputs, ExperimentOutput, Method, Qrels, RunFile, Topic};
pub use federation::{build_csi, Broker, Csi, TimeWindow, VerticalSet};
pub use index::{build_index, CollectionStats, InvertedIndex, PostingsCounter, DEFAULT_MU};
pub use query::{DocRef, QueryModel, ScoredDoc};
pub use relevance::{clrm, expand_and_rerun, ExpansionParams, FeedbackSet, FeedbackSource, IndexFeedback, PrfOutcome};
pub use selection::{taily_build, CrcsParams, RankSParams, SelectionResult, Selector, TailyParams, TailyStats};
pub use tokenize::tokenize;
