//! Evaluation: TREC formats, metrics and the batch experiment runner.

pub mod experiment;
pub mod metrics;
pub mod trec;

pub use experiment::{
    run_experiment, run_sweep, write_metrics_csv, write_sweep_csv, ExperimentConfig, ExperimentInputs, ExperimentOutput,
    trace_query, Method, MethodSummary, MetricRow, QueryTrace, SweepAxis, SweepRow,
};
pub use metrics::{average_precision, ndcg_at_k, recall_at_depth, EVAL_DEPTH, NDCG_DEPTH};
pub use trec::{parse_topics, read_topics, Qrels, RunFile, RunRow, Topic};
