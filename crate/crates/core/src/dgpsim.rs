//! Synthetic data generation and the Monte Carlo study harness.
//!
//! Two data generating processes are supported. P1 is a bivariate AR(1)
//! recursion where the target additionally loads on the lagged source; P2
//! feeds a P1 pair through one more AR(1) layer per component. Both use
//! standard normal innovations and discard a burn-in prefix. The harness
//! estimates rejection frequencies of the change test over independent trials
//! and approximates the population difference statistic from long samples.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bootstrap::BootstrapConfig;
use crate::changetest::{d_statistic, run_change_test, ChangeTestError};
use crate::cqgram::{cqgram_table, CqError, CqGramTable, LevelGrid, ObservedSeries};
use crate::quantreg::DesignMatrix;
use crate::stream::{self, tags};

#[derive(Debug, Error)]
pub enum DgpError {
    #[error("parameters violate stationarity: {0}")]
    NonStationary(String),
    #[error("series too short to attach lagged controls")]
    TooShort,
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Cq(#[from] CqError),
    #[error(transparent)]
    ChangeTest(#[from] ChangeTestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgpModel {
    P1,
    P2,
}

/// Which lagged variables form the controlling sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlScheme {
    /// No controlling variables.
    None,
    /// Target controls on both lagged series; source controls on its own lag.
    Exp2,
    /// Each series controls on its own lag.
    Exp3,
}

pub const DEFAULT_BURN_IN: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpSpec {
    pub model: DgpModel,
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub burn_in: usize,
    pub length: usize,
    pub control_scheme: ControlScheme,
}

impl DgpSpec {
    pub fn p1(alpha0: f64, alpha1: f64, length: usize) -> Self {
        Self {
            model: DgpModel::P1,
            alpha0,
            alpha1,
            beta0: 0.0,
            beta1: 0.0,
            gamma0: 0.0,
            gamma1: 0.0,
            burn_in: DEFAULT_BURN_IN,
            length,
            control_scheme: ControlScheme::None,
        }
    }

    /// P2 parameters in the order `(beta0, beta1, gamma0, gamma1, alpha0, alpha1)`.
    pub fn p2(params: [f64; 6], length: usize) -> Self {
        Self {
            model: DgpModel::P2,
            beta0: params[0],
            beta1: params[1],
            gamma0: params[2],
            gamma1: params[3],
            alpha0: params[4],
            alpha1: params[5],
            burn_in: DEFAULT_BURN_IN,
            length,
            control_scheme: ControlScheme::None,
        }
    }

    pub fn with_controls(mut self, scheme: ControlScheme) -> Self {
        self.control_scheme = scheme;
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_length(mut self, length: usize) -> Self {
        self.length = length;
        self
    }

    pub fn validate(&self) -> Result<(), DgpError> {
        if self.alpha0.abs() >= 1.0 {
            return Err(DgpError::NonStationary(format!("|alpha0| = {}", self.alpha0.abs())));
        }
        if self.model == DgpModel::P2 {
            if self.beta1.abs() >= 1.0 {
                return Err(DgpError::NonStationary(format!("|beta1| = {}", self.beta1.abs())));
            }
            if self.gamma1.abs() >= 1.0 {
                return Err(DgpError::NonStationary(format!("|gamma1| = {}", self.gamma1.abs())));
            }
        }
        Ok(())
    }
}

/// Standard normals by the Box-Muller transform, pinned here so streams stay
/// reproducible across dependency upgrades.
struct NormalSource<'a> {
    rng: &'a mut ChaCha8Rng,
    spare: Option<f64>,
}

impl<'a> NormalSource<'a> {
    fn new(rng: &'a mut ChaCha8Rng) -> Self {
        Self { rng, spare: None }
    }

    fn next(&mut self) -> f64 {
        use rand::Rng;
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// P1: `Y_t = 0.15 + a0 Y_{t-1} + a1 X_{t-1} + e1`, `X_t = 0.05 + a0 X_{t-1} + e2`.
/// The first `burn_in` steps are discarded.
pub fn generate_p1(spec: &DgpSpec, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<f64>), DgpError> {
    spec.validate()?;
    let mut normals = NormalSource::new(rng);
    let mut ys = Vec::with_capacity(spec.length);
    let mut xs = Vec::with_capacity(spec.length);
    let (mut prev_y, mut prev_x) = (0.0, 0.0);
    for step in 0..spec.burn_in + spec.length {
        let e1 = normals.next();
        let e2 = normals.next();
        let y = 0.15 + spec.alpha0 * prev_y + spec.alpha1 * prev_x + e1;
        let x = 0.05 + spec.alpha0 * prev_x + e2;
        if step >= spec.burn_in {
            ys.push(y);
            xs.push(x);
        }
        prev_y = y;
        prev_x = x;
    }
    Ok((ys, xs))
}

/// P2: an inner P1 pair `(U, V)` drives `Y_t = b0 + b1 Y_{t-1} + U_t` and
/// `X_t = g0 + g1 X_{t-1} + V_t`. Burn-in applies to the composite recursion.
pub fn generate_p2(spec: &DgpSpec, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<f64>), DgpError> {
    spec.validate()?;
    let mut normals = NormalSource::new(rng);
    let mut ys = Vec::with_capacity(spec.length);
    let mut xs = Vec::with_capacity(spec.length);
    let (mut prev_u, mut prev_v, mut prev_y, mut prev_x) = (0.0, 0.0, 0.0, 0.0);
    for step in 0..spec.burn_in + spec.length {
        let e1 = normals.next();
        let e2 = normals.next();
        let u = 0.15 + spec.alpha0 * prev_u + spec.alpha1 * prev_v + e1;
        let v = 0.05 + spec.alpha0 * prev_v + e2;
        let y = spec.beta0 + spec.beta1 * prev_y + u;
        let x = spec.gamma0 + spec.gamma1 * prev_x + v;
        if step >= spec.burn_in {
            ys.push(y);
            xs.push(x);
        }
        prev_u = u;
        prev_v = v;
        prev_y = y;
        prev_x = x;
    }
    Ok((ys, xs))
}

pub fn generate(spec: &DgpSpec, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<f64>), DgpError> {
    match spec.model {
        DgpModel::P1 => generate_p1(spec, rng),
        DgpModel::P2 => generate_p2(spec, rng),
    }
}

/// Attaches lagged controlling variables. Lagged schemes drop the first row
/// so every component aligns at length `T - 1`.
pub fn attach_controls(
    y: &[f64],
    x: &[f64],
    scheme: ControlScheme,
) -> Result<ObservedSeries, DgpError> {
    if y.len() != x.len() {
        return Err(DgpError::Cq(CqError::LengthMismatch));
    }
    match scheme {
        ControlScheme::None => Ok(ObservedSeries::without_controls(y.to_vec(), x.to_vec())?),
        ControlScheme::Exp2 | ControlScheme::Exp3 => {
            let t_len = y.len();
            if t_len < 2 {
                return Err(DgpError::TooShort);
            }
            let n = t_len - 1;
            let y_obs = y[1..].to_vec();
            let x_obs = x[1..].to_vec();
            let y_lag = y[..n].to_vec();
            let x_lag = x[..n].to_vec();
            let (zy, zx) = match scheme {
                ControlScheme::Exp2 => (
                    DesignMatrix::from_columns(n, &[y_lag, x_lag.clone()]).map_err(CqError::from)?,
                    DesignMatrix::from_columns(n, &[x_lag]).map_err(CqError::from)?,
                ),
                _ => (
                    DesignMatrix::from_columns(n, &[y_lag]).map_err(CqError::from)?,
                    DesignMatrix::from_columns(n, &[x_lag]).map_err(CqError::from)?,
                ),
            };
            Ok(ObservedSeries::new(y_obs, zy, x_obs, zx)?)
        }
    }
}

fn simulate_period(spec: &DgpSpec, rng: &mut ChaCha8Rng) -> Result<ObservedSeries, DgpError> {
    let (y, x) = generate(spec, rng)?;
    attach_controls(&y, &x, spec.control_scheme)
}

/// Rejection-frequency estimate over Monte Carlo trials.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerEstimate {
    pub trials: usize,
    pub rejections: usize,
    pub power: f64,
    pub nominal_level: f64,
    pub approx_difference: Option<f64>,
}

/// Draws `trials` independent period pairs, runs the change test on each, and
/// counts rejections at `nominal_level`. Deterministic in `cfg.seed`; trials
/// run on the worker pool with per-trial streams.
pub fn estimate_power(
    spec_b: &DgpSpec,
    spec_a: &DgpSpec,
    trials: usize,
    grid: &LevelGrid,
    p: usize,
    cfg: &BootstrapConfig,
    nominal_level: f64,
) -> Result<PowerEstimate, DgpError> {
    if trials == 0 {
        return Err(DgpError::NoTrials);
    }
    spec_b.validate()?;
    spec_a.validate()?;
    let rejections = (0..trials as u64)
        .into_par_iter()
        .map(|trial| -> Result<usize, DgpError> {
            let trial_seed = stream::derive_seed(cfg.seed, &[tags::TRIAL, trial]);
            let mut rng_b = stream::substream(trial_seed, &[tags::DGP_B]);
            let mut rng_a = stream::substream(trial_seed, &[tags::DGP_A]);
            let period_b = simulate_period(spec_b, &mut rng_b)?;
            let period_a = simulate_period(spec_a, &mut rng_a)?;
            let boot_cfg = BootstrapConfig {
                replicates: cfg.replicates,
                expected_block_length: cfg.expected_block_length,
                seed: stream::derive_seed(trial_seed, &[tags::BOOT]),
            };
            let res = run_change_test(&period_b, &period_a, grid, p, &boot_cfg)?;
            Ok(usize::from(res.p_value < nominal_level))
        })
        .try_reduce(|| 0usize, |a, b| Ok(a + b))?;
    Ok(PowerEstimate {
        trials,
        rejections,
        power: rejections as f64 / trials as f64,
        nominal_level,
        approx_difference: None,
    })
}

/// How the long-sample repetitions are combined in [`approx_difference`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DifferenceAveraging {
    /// Average the repetition tables cell-wise, then take the sup-sum.
    TablesFirst,
    /// Take the sup-sum per repetition, then average.
    StatisticFirst,
}

/// Approximates the population difference statistic: both periods are drawn
/// `reps` times at length `big_t` without controlling variables, estimates
/// are averaged per [`DifferenceAveraging`], and the sup-sum is evaluated.
pub fn approx_difference(
    spec_b: &DgpSpec,
    spec_a: &DgpSpec,
    big_t: usize,
    reps: usize,
    grid: &LevelGrid,
    p: usize,
    seed: u64,
    averaging: DifferenceAveraging,
) -> Result<f64, DgpError> {
    if reps == 0 {
        return Err(DgpError::NoTrials);
    }
    let plain_b = spec_b.with_length(big_t).with_controls(ControlScheme::None);
    let plain_a = spec_a.with_length(big_t).with_controls(ControlScheme::None);
    let tables: Vec<(CqGramTable, CqGramTable)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| -> Result<(CqGramTable, CqGramTable), DgpError> {
            let mut rng_b = stream::substream(seed, &[tags::DIFF_REP, rep, tags::DGP_B]);
            let mut rng_a = stream::substream(seed, &[tags::DIFF_REP, rep, tags::DGP_A]);
            let (yb, xb) = generate(&plain_b, &mut rng_b)?;
            let (ya, xa) = generate(&plain_a, &mut rng_a)?;
            let tb = cqgram_table(&ObservedSeries::without_controls(yb, xb)?, grid, p)?;
            let ta = cqgram_table(&ObservedSeries::without_controls(ya, xa)?, grid, p)?;
            Ok((tb, ta))
        })
        .collect::<Result<_, DgpError>>()?;

    match averaging {
        DifferenceAveraging::TablesFirst => {
            let avg = |pick: &dyn Fn(&(CqGramTable, CqGramTable)) -> &CqGramTable| {
                let len = pick(&tables[0]).values().len();
                let mut acc = vec![0.0; len];
                for pair in &tables {
                    for (a, &v) in acc.iter_mut().zip(pick(pair).values()) {
                        *a += if v.is_nan() { 0.0 } else { v };
                    }
                }
                for a in acc.iter_mut() {
                    *a /= reps as f64;
                }
                acc
            };
            let lags: Vec<usize> = (1..=p).collect();
            let avg_b = CqGramTable::from_values(grid.clone(), lags.clone(), avg(&|t| &t.0))?;
            let avg_a = CqGramTable::from_values(grid.clone(), lags, avg(&|t| &t.1))?;
            Ok(d_statistic(&avg_b, &avg_a)?)
        }
        DifferenceAveraging::StatisticFirst => {
            let mut acc = 0.0;
            for (tb, ta) in &tables {
                acc += d_statistic(tb, ta)?;
            }
            Ok(acc / reps as f64)
        }
    }
}
