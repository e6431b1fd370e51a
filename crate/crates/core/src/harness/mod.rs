//! Datasets, evaluation, and the pruning-rate sweep with its reports.

mod dataset;
mod eval;
mod report;
mod sweep;

pub use dataset::{generate_synthetic, Dataset, NormStats, Split, SyntheticConfig, DATASET_VERSION, SYNTHETIC_PATTERNS};
pub use eval::{evaluate, EvalResult};
pub use report::{load_report, records_csv, write_report, ReportPaths};
pub use sweep::{
    rate_grid_fine, run_sweep, summarize, SamplingLabel, ScoreMethod, SummaryRow, SweepConfig, SweepProvenance, SweepRecord, SweepReport,
    SWEEP_VERSION, TABLE1_RATES,
};
