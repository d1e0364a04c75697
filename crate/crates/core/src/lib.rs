//! Tests whether the directional quantile dependence (cross-quantilogram) of one
//! time series on another is the same across two observation periods.
//!
//! The pipeline: linear quantile regression estimates conditional quantiles, the
//! quantile-hit processes of the two series are correlated at positive lags, the
//! two periods' cross-quantilogram tables are compared through a sup-type
//! statistic, and a stationary block bootstrap supplies the p-value. A
//! simulation harness estimates size and power under two autoregressive data
//! generating processes, and heatmap export produces the per-lag dependence
//! matrices for empirical work.

pub mod bootstrap;
pub mod changetest;
pub mod commands;
pub mod config;
pub mod cqgram;
pub mod dgpsim;
pub mod heatmap;
pub mod ingest;
pub mod quantreg;
pub(crate) mod stream;

pub use bootstrap::{resample_indices, resample_indices_moving_block, resample_series, BootstrapConfig};
pub use changetest::{centered_boot_statistic, d_statistic, run_change_test, ChangeTestResult};
pub use cqgram::{cqgram_table, cross_quantilogram, psi, CqGramTable, LevelGrid, ObservedSeries};
pub use dgpsim::{
    approx_difference, attach_controls, estimate_power, generate_p1, generate_p2, ControlScheme,
    DgpModel, DgpSpec, DifferenceAveraging, PowerEstimate,
};
pub use heatmap::heatmap_matrix;
pub use ingest::{align_and_split, difference, load_csv, DatedSeries};
pub use quantreg::{
    check_loss, fit_quantile_regression, sample_quantile, DesignMatrix, QuantRegError, QuantileFit,
};
