//! Quantile-hit processes and the sample cross-quantilogram.
//!
//! For levels `(tau1, tau2)` and lag `k >= 1`, the estimator correlates the
//! hit process of the target series at time `t` with the hit process of the
//! source series at `t - k`. Conditional quantiles come from linear quantile
//! regression on each series' controlling variables; with no controls they
//! reduce to sample quantiles. The source-side model is refit on the first
//! `T - k` observations for each lag.

use rayon::prelude::*;
use thiserror::Error;

use crate::quantreg::{fit_quantile_regression, DesignMatrix, QuantRegError};

#[derive(Debug, Error)]
pub enum CqError {
    #[error("quantile level must lie strictly inside (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("levels must be strictly increasing and non-empty")]
    BadGrid,
    #[error("lag must be at least 1")]
    BadLag,
    #[error("series of length {t_len} is too short for lag {lag} with {predictors} predictors")]
    SeriesTooShort {
        t_len: usize,
        lag: usize,
        predictors: usize,
    },
    #[error("series components disagree on length")]
    LengthMismatch,
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("degenerate denominator in the cross-quantilogram ratio")]
    DegenerateDenominator,
    #[error("table values must lie in [-1, 1] or be the NaN sentinel")]
    BadTableValue,
    #[error(transparent)]
    QuantReg(#[from] QuantRegError),
}

/// Quantile-hit weight: `1 - tau` strictly below the quantile, `-tau` at or
/// above it.
pub fn psi(tau: f64, u: f64) -> Result<f64, CqError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(CqError::InvalidLevel(tau));
    }
    if !u.is_finite() {
        return Err(CqError::NonFinite);
    }
    Ok(psi_raw(tau, u))
}

#[inline]
pub(crate) fn psi_raw(tau: f64, u: f64) -> f64 {
    if u < 0.0 {
        1.0 - tau
    } else {
        -tau
    }
}

/// One period of observations: target series `y` with its controls, source
/// series `x` with its controls. All four components share the row count, and
/// resampling moves whole rows.
#[derive(Debug, Clone)]
pub struct ObservedSeries {
    y: Vec<f64>,
    zy: DesignMatrix,
    x: Vec<f64>,
    zx: DesignMatrix,
}

impl ObservedSeries {
    pub fn new(
        y: Vec<f64>,
        zy: DesignMatrix,
        x: Vec<f64>,
        zx: DesignMatrix,
    ) -> Result<Self, CqError> {
        let t_len = y.len();
        if t_len == 0 || x.len() != t_len || zy.rows() != t_len || zx.rows() != t_len {
            return Err(CqError::LengthMismatch);
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(CqError::NonFinite);
        }
        Ok(Self { y, zy, x, zx })
    }

    /// Both series without controlling variables.
    pub fn without_controls(y: Vec<f64>, x: Vec<f64>) -> Result<Self, CqError> {
        let t_len = y.len();
        Self::new(y, DesignMatrix::empty(t_len), x, DesignMatrix::empty(t_len))
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn zy(&self) -> &DesignMatrix {
        &self.zy
    }

    pub fn zx(&self) -> &DesignMatrix {
        &self.zx
    }

    /// Rows gathered by index, keeping the four components paired.
    pub fn gather(&self, idx: &[usize]) -> ObservedSeries {
        ObservedSeries {
            y: idx.iter().map(|&t| self.y[t]).collect(),
            zy: self.zy.gather_rows(idx),
            x: idx.iter().map(|&t| self.x[t]).collect(),
            zx: self.zx.gather_rows(idx),
        }
    }
}

/// The level grid: the cross product of two strictly increasing level sets.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGrid {
    taus1: Vec<f64>,
    taus2: Vec<f64>,
}

impl LevelGrid {
    pub fn new(taus1: Vec<f64>, taus2: Vec<f64>) -> Result<Self, CqError> {
        for taus in [&taus1, &taus2] {
            if taus.is_empty() {
                return Err(CqError::BadGrid);
            }
            for &t in taus.iter() {
                if !(t > 0.0 && t < 1.0) {
                    return Err(CqError::InvalidLevel(t));
                }
            }
            if taus.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CqError::BadGrid);
            }
        }
        Ok(Self { taus1, taus2 })
    }

    /// The same level set on both axes.
    pub fn square(taus: Vec<f64>) -> Result<Self, CqError> {
        Self::new(taus.clone(), taus)
    }

    pub fn single(tau1: f64, tau2: f64) -> Result<Self, CqError> {
        Self::new(vec![tau1], vec![tau2])
    }

    pub fn taus1(&self) -> &[f64] {
        &self.taus1
    }

    pub fn taus2(&self) -> &[f64] {
        &self.taus2
    }
}

/// Estimated cross-quantilograms over a level grid and a set of lags.
/// Degenerate cells hold a NaN sentinel and are counted.
#[derive(Debug, Clone)]
pub struct CqGramTable {
    grid: LevelGrid,
    lags: Vec<usize>,
    rho: Vec<f64>,
    degenerate_cells: usize,
}

impl CqGramTable {
    /// Builds a table from precomputed values, laid out as
    /// `[tau1-major][tau2][lag]`. NaN marks a degenerate cell.
    pub fn from_values(
        grid: LevelGrid,
        lags: Vec<usize>,
        rho: Vec<f64>,
    ) -> Result<Self, CqError> {
        if lags.is_empty() || lags.contains(&0) {
            return Err(CqError::BadLag);
        }
        if rho.len() != grid.taus1.len() * grid.taus2.len() * lags.len() {
            return Err(CqError::LengthMismatch);
        }
        if rho.iter().any(|v| v.is_finite() && !(-1.0..=1.0).contains(v)) {
            return Err(CqError::BadTableValue);
        }
        let degenerate_cells = rho.iter().filter(|v| v.is_nan()).count();
        Ok(Self {
            grid,
            lags,
            rho,
            degenerate_cells,
        })
    }

    pub fn grid(&self) -> &LevelGrid {
        &self.grid
    }

    pub fn lags(&self) -> &[usize] {
        &self.lags
    }

    /// Value at `(taus1[i], taus2[j], lags[kk])`; NaN for degenerate cells.
    pub fn value(&self, i: usize, j: usize, kk: usize) -> f64 {
        self.rho[self.offset(i, j, kk)]
    }

    pub fn degenerate_cells(&self) -> usize {
        self.degenerate_cells
    }

    /// Raw storage, laid out `[tau1-major][tau2][lag]`.
    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    pub(crate) fn same_shape(&self, other: &CqGramTable) -> bool {
        self.grid == other.grid && self.lags == other.lags
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, kk: usize) -> usize {
        (i * self.grid.taus2.len() + j) * self.lags.len() + kk
    }
}

fn psi_residuals(tau: f64, values: &[f64], fitted: &[f64]) -> Vec<f64> {
    values
        .iter()
        .zip(fitted)
        .map(|(&v, &f)| psi_raw(tau, v - f))
        .collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sum_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// How fit failures on a degenerate sample are treated during table
/// construction. Original-data tables report them; bootstrap replicates turn
/// the affected cells into sentinels so every replicate completes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FitPolicy {
    Strict,
    SentinelOnFailure,
}

/// Core table builder shared by every entry point, so single cells, full
/// tables, and heatmap slices agree bit-for-bit.
pub(crate) fn table_for_lags(
    series: &ObservedSeries,
    grid: &LevelGrid,
    lags: &[usize],
) -> Result<CqGramTable, CqError> {
    table_for_lags_with_policy(series, grid, lags, FitPolicy::Strict)
}

pub(crate) fn table_for_lags_with_policy(
    series: &ObservedSeries,
    grid: &LevelGrid,
    lags: &[usize],
    policy: FitPolicy,
) -> Result<CqGramTable, CqError> {
    if lags.is_empty() || lags.contains(&0) {
        return Err(CqError::BadLag);
    }
    let t_len = series.len();
    let k_max = *lags.iter().max().expect("non-empty lags");
    let d_max = series.zy.cols().max(series.zx.cols());
    if t_len <= k_max + d_max + 2 {
        return Err(CqError::SeriesTooShort {
            t_len,
            lag: k_max,
            predictors: d_max,
        });
    }

    let n1 = grid.taus1.len();
    let n2 = grid.taus2.len();
    let nk = lags.len();

    // Target side: one fit per tau1 on the full sample, reused for every
    // (tau2, lag) cell.
    let psi1: Vec<Option<Vec<f64>>> = grid
        .taus1
        .par_iter()
        .map(|&tau1| {
            match fit_quantile_regression(&series.y, &series.zy, tau1) {
                Ok(fit) => Ok(Some(psi_residuals(tau1, &series.y, &fit.fitted))),
                Err(e) if policy == FitPolicy::Strict => Err(CqError::from(e)),
                Err(_) => Ok(None),
            }
        })
        .collect::<Result<_, CqError>>()?;

    // Per-lag denominators of the target factor.
    let den1: Vec<Vec<f64>> = lags
        .iter()
        .map(|&k| {
            psi1.iter()
                .map(|p| p.as_ref().map_or(0.0, |p| sum_sq(&p[k..])))
                .collect()
        })
        .collect();

    // Source side: one job per (lag, tau2), each refitting the source model
    // on the first T - k rows and filling a column of cells.
    let heads: Vec<DesignMatrix> = lags.iter().map(|&k| series.zx.head_rows(t_len - k)).collect();
    let jobs: Vec<(usize, usize)> = (0..nk)
        .flat_map(|kk| (0..n2).map(move |j| (kk, j)))
        .collect();
    let blocks: Vec<(Vec<f64>, usize)> = jobs
        .par_iter()
        .map(|&(kk, j)| {
            let k = lags[kk];
            let n = t_len - k;
            let tau2 = grid.taus2[j];
            let psi2 = match fit_quantile_regression(&series.x[..n], &heads[kk], tau2) {
                Ok(fit) => Some(psi_residuals(tau2, &series.x[..n], &fit.fitted)),
                Err(e) if policy == FitPolicy::Strict => return Err(CqError::from(e)),
                Err(_) => None,
            };
            let den2 = psi2.as_ref().map_or(0.0, |p| sum_sq(p));
            let mut cells = vec![0.0; n1];
            let mut degenerate = 0usize;
            for i in 0..n1 {
                let pair = psi1[i].as_ref().zip(psi2.as_ref());
                cells[i] = match pair {
                    Some((p1, p2)) => {
                        let num = dot(&p1[k..], p2);
                        let d1 = den1[kk][i];
                        if d1 > 0.0 && den2 > 0.0 {
                            (num / (d1 * den2).sqrt()).clamp(-1.0, 1.0)
                        } else {
                            degenerate += 1;
                            f64::NAN
                        }
                    }
                    None => {
                        degenerate += 1;
                        f64::NAN
                    }
                };
            }
            Ok((cells, degenerate))
        })
        .collect::<Result<_, CqError>>()?;

    let mut rho = vec![0.0; n1 * n2 * nk];
    let mut degenerate_cells = 0;
    for (&(kk, j), (cells, degenerate)) in jobs.iter().zip(&blocks) {
        degenerate_cells += degenerate;
        for (i, &v) in cells.iter().enumerate() {
            rho[(i * n2 + j) * nk + kk] = v;
        }
    }

    Ok(CqGramTable {
        grid: grid.clone(),
        lags: lags.to_vec(),
        rho,
        degenerate_cells,
    })
}

/// The sample cross-quantilogram at a single `(tau1, tau2, k)`.
pub fn cross_quantilogram(
    series: &ObservedSeries,
    tau1: f64,
    tau2: f64,
    k: usize,
) -> Result<f64, CqError> {
    let grid = LevelGrid::single(tau1, tau2)?;
    let table = table_for_lags(series, &grid, &[k])?;
    let v = table.value(0, 0, 0);
    if v.is_nan() {
        return Err(CqError::DegenerateDenominator);
    }
    Ok(v)
}

/// The full table over `grid x {1, ..., p}`.
pub fn cqgram_table(
    series: &ObservedSeries,
    grid: &LevelGrid,
    p: usize,
) -> Result<CqGramTable, CqError> {
    let lags: Vec<usize> = (1..=p).collect();
    table_for_lags(series, grid, &lags)
}
