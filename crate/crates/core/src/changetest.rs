//! Two-period difference test for cross-quantilograms.
//!
//! The statistic is the supremum over the level grid of the summed squared
//! per-lag differences between the two periods' estimates. Its null
//! distribution is approximated by resampling each period independently with
//! the stationary bootstrap, re-estimating both tables per replicate, and
//! centering each period's bootstrap estimate at its original estimate. The
//! p-value is the fraction of replicates whose centered statistic strictly
//! exceeds the observed one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bootstrap::{resample_series, BootstrapConfig, BootstrapError};
use crate::cqgram::{cqgram_table, CqError, CqGramTable, LevelGrid, ObservedSeries};
use crate::stream::{self, tags};

#[derive(Debug, Error)]
pub enum ChangeTestError {
    #[error("tables disagree on level grid or lags")]
    GridMismatch,
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
    #[error(transparent)]
    Cq(#[from] CqError),
}

/// The two level axes, as serialized alongside results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauAxes {
    pub taus1: Vec<f64>,
    pub taus2: Vec<f64>,
}

/// Outcome of the change test. Serializes to the documented JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeTestResult {
    pub d_hat: f64,
    pub p_value: f64,
    #[serde(rename = "L")]
    pub replicates: usize,
    #[serde(rename = "p")]
    pub max_lag: usize,
    pub taus: TauAxes,
    pub d_boot: Vec<f64>,
    pub degenerate_cell_count: usize,
    pub seed: u64,
    pub block_length: f64,
}

#[inline]
fn finite_or_zero(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v
    }
}

/// Sup over the grid of the summed squared per-lag differences between two
/// tables. Sentinel cells enter as zero.
pub fn d_statistic(table_b: &CqGramTable, table_a: &CqGramTable) -> Result<f64, ChangeTestError> {
    if !table_b.same_shape(table_a) {
        return Err(ChangeTestError::GridMismatch);
    }
    let n1 = table_b.grid().taus1().len();
    let n2 = table_b.grid().taus2().len();
    let nk = table_b.lags().len();
    let mut sup = 0.0_f64;
    for i in 0..n1 {
        for j in 0..n2 {
            let mut sum = 0.0;
            for kk in 0..nk {
                let diff =
                    finite_or_zero(table_b.value(i, j, kk)) - finite_or_zero(table_a.value(i, j, kk));
                sum += diff * diff;
            }
            sup = sup.max(sum);
        }
    }
    Ok(sup)
}

/// The centered bootstrap statistic: each period's bootstrap estimate minus
/// its original estimate, differenced across periods, squared and summed over
/// lags, then sup'd over the grid.
pub fn centered_boot_statistic(
    boot_b: &CqGramTable,
    base_b: &CqGramTable,
    boot_a: &CqGramTable,
    base_a: &CqGramTable,
) -> Result<f64, ChangeTestError> {
    if !boot_b.same_shape(base_b) || !base_b.same_shape(boot_a) || !boot_a.same_shape(base_a) {
        return Err(ChangeTestError::GridMismatch);
    }
    let n1 = base_b.grid().taus1().len();
    let n2 = base_b.grid().taus2().len();
    let nk = base_b.lags().len();
    let mut sup = 0.0_f64;
    for i in 0..n1 {
        for j in 0..n2 {
            let mut sum = 0.0;
            for kk in 0..nk {
                let dev_b = finite_or_zero(boot_b.value(i, j, kk))
                    - finite_or_zero(base_b.value(i, j, kk));
                let dev_a = finite_or_zero(boot_a.value(i, j, kk))
                    - finite_or_zero(base_a.value(i, j, kk));
                let diff = dev_b - dev_a;
                sum += diff * diff;
            }
            sup = sup.max(sum);
        }
    }
    Ok(sup)
}

/// Runs the full test: base tables, `L` independent double resamples, centered
/// statistics, and the exceedance p-value. The two periods may have different
/// lengths; each is resampled at its own length. Ties `d_hat == d_boot` count
/// as non-exceedance.
pub fn run_change_test(
    period_b: &ObservedSeries,
    period_a: &ObservedSeries,
    grid: &LevelGrid,
    p: usize,
    cfg: &BootstrapConfig,
) -> Result<ChangeTestResult, ChangeTestError> {
    let seed_b = stream::derive_seed(cfg.seed, &[tags::PERIOD_B]);
    let seed_a = stream::derive_seed(cfg.seed, &[tags::PERIOD_A]);
    run_change_test_seeded(period_b, seed_b, period_a, seed_a, grid, p, cfg)
}

pub(crate) fn run_change_test_seeded(
    period_b: &ObservedSeries,
    seed_b: u64,
    period_a: &ObservedSeries,
    seed_a: u64,
    grid: &LevelGrid,
    p: usize,
    cfg: &BootstrapConfig,
) -> Result<ChangeTestResult, ChangeTestError> {
    cfg.validate()?;
    let block = cfg.resolve_block_length(period_b.len().max(period_a.len()));

    let base_b = cqgram_table(period_b, grid, p)?;
    let base_a = cqgram_table(period_a, grid, p)?;
    let d_hat = d_statistic(&base_b, &base_a)?;

    let cfg_b = BootstrapConfig {
        replicates: cfg.replicates,
        expected_block_length: Some(block),
        seed: seed_b,
    };
    let cfg_a = BootstrapConfig {
        seed: seed_a,
        ..cfg_b
    };

    // degenerate resamples yield sentinel cells instead of aborting, so all
    // L replicates always complete
    let lags: Vec<usize> = (1..=p).collect();
    let boot_table = |series: &ObservedSeries, cfg: &BootstrapConfig, replicate: u64| {
        crate::cqgram::table_for_lags_with_policy(
            &resample_series(series, cfg, replicate),
            grid,
            &lags,
            crate::cqgram::FitPolicy::SentinelOnFailure,
        )
    };
    let per_replicate: Vec<(f64, usize)> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|replicate| {
            let boot_b = boot_table(period_b, &cfg_b, replicate)?;
            let boot_a = boot_table(period_a, &cfg_a, replicate)?;
            let stat = centered_boot_statistic(&boot_b, &base_b, &boot_a, &base_a)?;
            Ok((stat, boot_b.degenerate_cells() + boot_a.degenerate_cells()))
        })
        .collect::<Result<_, ChangeTestError>>()?;

    let d_boot: Vec<f64> = per_replicate.iter().map(|&(s, _)| s).collect();
    let exceed = d_boot.iter().filter(|&&s| d_hat < s).count();
    let p_value = exceed as f64 / cfg.replicates as f64;
    let degenerate_cell_count = base_b.degenerate_cells()
        + base_a.degenerate_cells()
        + per_replicate.iter().map(|&(_, d)| d).sum::<usize>();

    Ok(ChangeTestResult {
        d_hat,
        p_value,
        replicates: cfg.replicates,
        max_lag: p,
        taus: TauAxes {
            taus1: grid.taus1().to_vec(),
            taus2: grid.taus2().to_vec(),
        },
        d_boot,
        degenerate_cell_count,
        seed: cfg.seed,
        block_length: block,
    })
}
