//! Splits, training, depth sweeps and coefficient logging.

mod coeffs;
pub mod config;
mod split;
mod sweep;
mod train;

pub use coeffs::{
    coefficient_table, coefficient_trend, degree_quartiles, log_coefficients, ranks, spearman,
    CoefficientRow,
};
pub use config::{DataSource, ExperimentConfig};
pub use split::{apply_missing_features, make_split, Split, SplitPolicy};
pub use sweep::{
    cell_config, depth_sweep, smooth_study, summarize, SweepCell, SweepRow, SweepSpec,
    SMOOTH_HEADER, SWEEP_HEADER, SWEEP_SUMMARY_HEADER,
};
pub use train::{train, train_with_model, EpochLog, Evaluator, Hyper, LrResult, TrainReport};
