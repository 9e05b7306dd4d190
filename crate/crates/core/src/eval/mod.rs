//! Cross-validation with grid selection, rank statistics across datasets,
//! and coefficient reports.

mod bench;
mod coef;
mod cv;
mod stats;

pub use bench::{
    load_entry, resolve_data_path, run_benchmark, BenchmarkOutcome, DatasetEntry, ExperimentConfig, GridEntry,
    MethodEntry, MetricSummary, PairFailure, DATA_DIR_ENV,
};
pub use coef::{abs_coefficient_csv, coefficient_report, CoefficientReport, CoefficientRow};
pub use cv::{
    fit_and_score, run_cv, validation_split, CvResult, FoldResult, GridSpec, MethodSpec, SkippedFold, DEFAULT_GRID,
};
pub use stats::{
    critical_difference, fractional_ranks, friedman, nemenyi, nemenyi_from_ranks, nemenyi_q, rank_methods,
    FriedmanResult, NemenyiResult, PairComparison, RankTable,
};
