//! Block bootstrap resampling for weakly dependent series.
//!
//! The stationary bootstrap concatenates blocks with geometric random lengths
//! and circular wraparound; the moving-block variant uses fixed-length blocks.
//! Resampling an [`ObservedSeries`] applies one index draw to all four
//! components, so rows travel together. Each replicate draws from its own
//! stream keyed by `(seed, replicate_id)`, which makes the full set of
//! replicates reproducible under any scheduling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cqgram::ObservedSeries;
use crate::stream;

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("replicate count must be at least 1")]
    NoReplicates,
    #[error("expected block length must be at least 1, got {0}")]
    BadBlockLength(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    /// Number of bootstrap replicates (L).
    pub replicates: usize,
    /// Expected block length; `None` picks `max(2, ceil(T^(1/3)))` from the
    /// series being resampled.
    pub expected_block_length: Option<f64>,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            expected_block_length: None,
            seed,
        }
    }

    pub fn with_block_length(mut self, expected_block_length: f64) -> Self {
        self.expected_block_length = Some(expected_block_length);
        self
    }

    pub fn validate(&self) -> Result<(), BootstrapError> {
        if self.replicates == 0 {
            return Err(BootstrapError::NoReplicates);
        }
        if let Some(b) = self.expected_block_length {
            if !b.is_finite() || b < 1.0 {
                return Err(BootstrapError::BadBlockLength(b));
            }
        }
        Ok(())
    }

    pub fn resolve_block_length(&self, t_len: usize) -> f64 {
        self.expected_block_length
            .unwrap_or_else(|| default_expected_block_length(t_len))
    }
}

/// Rate-based default block length `max(2, ceil(T^(1/3)))`.
pub fn default_expected_block_length(t_len: usize) -> f64 {
    (t_len as f64).cbrt().ceil().max(2.0)
}

/// Stationary-bootstrap index draw: blocks start uniformly at random, run
/// consecutively with wraparound, and end with probability
/// `1 / expected_block_length` per step, giving geometric block lengths.
/// Returns exactly `t_len` indices in `0..t_len`.
pub fn resample_indices(
    t_len: usize,
    expected_block_length: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let q = 1.0 / expected_block_length.max(1.0);
    let mut idx = Vec::with_capacity(t_len);
    let mut cur = rng.gen_range(0..t_len);
    idx.push(cur);
    for _ in 1..t_len {
        if rng.gen::<f64>() < q {
            cur = rng.gen_range(0..t_len);
        } else {
            cur = (cur + 1) % t_len;
        }
        idx.push(cur);
    }
    idx
}

/// Moving-block variant: fixed-length blocks with wraparound.
pub fn resample_indices_moving_block(
    t_len: usize,
    block_length: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let block = block_length.max(1);
    let mut idx = Vec::with_capacity(t_len);
    while idx.len() < t_len {
        let start = rng.gen_range(0..t_len);
        for offset in 0..block {
            if idx.len() == t_len {
                break;
            }
            idx.push((start + offset) % t_len);
        }
    }
    idx
}

/// One stationary-bootstrap replicate of `series`, a pure function of
/// `(cfg.seed, replicate_id)`.
pub fn resample_series(
    series: &ObservedSeries,
    cfg: &BootstrapConfig,
    replicate_id: u64,
) -> ObservedSeries {
    let block = cfg.resolve_block_length(series.len());
    let mut rng = stream::substream(cfg.seed, &[replicate_id]);
    let idx = resample_indices(series.len(), block, &mut rng);
    series.gather(&idx)
}
