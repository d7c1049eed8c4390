//! Test protocol, metrics and comparison tables.

mod metrics;
mod suite;
mod table;

pub use metrics::{
    classify_trajectory, compute_metrics, metrics_from_summaries, EpisodeSummary, MeanStd, MetricsRecord,
};
pub use suite::{
    pooled_metrics, run_suite, worker_count, CellResult, GenerationFailure, PolicyFactory, ResultsCell, ResultsFile,
    SuiteResult, WORKERS_ENV,
};
pub use table::{ComparisonTable, TableRow, TABLE_COLUMNS};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no episodes to aggregate")]
    NoEpisodes,
    #[error("suite needs at least one case, environment and crowd model")]
    EmptySuite,
    #[error("table parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}
