//! Seedable time-varying bilevel streams.
//!
//! # Randomness
//!
//! All randomness comes from `ChaCha8Rng` (the `rand_chacha` crate), seeded
//! through [`split_seed`], a SplitMix64-based derivation. Every round draws
//! from its own sub-seed, so any round can be regenerated independently and a
//! stream is bitwise reproducible for a fixed configuration. Gaussian samples
//! use `rand_distr::StandardNormal`.

mod hyper_rep;
mod hyperopt;
mod quadratic;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use hyper_rep::{make_hr_stream, HrOracle, HrStream};
pub use hyperopt::{make_ho_stream, HoOracle, HoStream};
pub use quadratic::{make_quadratic_stream, QuadraticOracle, QuadraticStream};

use crate::error::{OboError, Result};
use crate::oracle::{RegularityConstants, RoundOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Quadratic,
    HyperRep,
    Hyperopt,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Quadratic => "quadratic",
            Family::HyperRep => "hyper_rep",
            Family::Hyperopt => "hyperopt",
        }
    }
}

/// How the underlying problem changes over rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Drift {
    #[default]
    Static,
    /// Piecewise constant; a new perturbation of size `magnitude` every `period` rounds.
    Staged { period: usize, magnitude: f64 },
    /// Rotation along a fixed random circle by angle `rate * ln(t)`. Squared
    /// per-round increments are `O(1/t²)`, so path lengths stay bounded.
    Smooth { rate: f64, magnitude: f64 },
}

impl Drift {
    fn validate(&self) -> Result<()> {
        match *self {
            Drift::Static => Ok(()),
            Drift::Staged { period, magnitude } => {
                if period == 0 || !(magnitude.is_finite() && magnitude >= 0.0) {
                    return Err(OboError::Config(format!(
                        "staged drift needs period >= 1 and finite magnitude >= 0 (got {period}, {magnitude})"
                    )));
                }
                Ok(())
            }
            Drift::Smooth { rate, magnitude } => {
                if !(rate.is_finite() && rate >= 0.0 && magnitude.is_finite() && magnitude >= 0.0) {
                    return Err(OboError::Config(format!(
                        "smooth drift needs finite rate >= 0 and magnitude >= 0 (got {rate}, {magnitude})"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Stage index of round `t` (always 0 unless staged).
    pub fn stage(&self, t: usize) -> usize {
        match *self {
            Drift::Staged { period, .. } => (t - 1) / period,
            _ => 0,
        }
    }

    /// Coefficients `(cos θ − 1, sin θ)` of the smooth rotation at round `t`.
    fn rotation(&self, t: usize) -> (f64, f64) {
        match *self {
            Drift::Smooth { rate, .. } => {
                let theta = rate * (t as f64).ln();
                (theta.cos() - 1.0, theta.sin())
            }
            _ => (0.0, 0.0),
        }
    }

    fn magnitude(&self) -> f64 {
        match *self {
            Drift::Static => 0.0,
            Drift::Staged { magnitude, .. } | Drift::Smooth { magnitude, .. } => magnitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadraticParams {
    pub d1: usize,
    pub d2: usize,
    /// Spectrum bounds of the inner Hessian.
    pub mu: f64,
    pub l: f64,
    /// Weight of the outer regularizer `½ r ‖x − e‖²`.
    pub outer_reg: f64,
    /// Scale of the coupling matrix entries (before the `1/√d1` normalization).
    pub coupling: f64,
}

impl Default for QuadraticParams {
    fn default() -> Self {
        Self {
            d1: 5,
            d2: 5,
            mu: 0.5,
            l: 2.0,
            outer_reg: 1.0,
            coupling: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperRepParams {
    /// Rows of the representation matrix (input features).
    pub p: usize,
    /// Columns of the representation matrix (representation size).
    pub d: usize,
    pub batch_f: usize,
    pub batch_g: usize,
    /// Ridge weight of the inner problem.
    pub gamma: f64,
}

impl Default for HyperRepParams {
    fn default() -> Self {
        Self {
            p: 20,
            d: 5,
            batch_f: 4,
            batch_g: 4,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperoptParams {
    pub classes: usize,
    pub features: usize,
    pub batch: usize,
    pub val_batch: usize,
    /// `(start_round, label_noise_fraction)` pairs with increasing start rounds.
    pub corruption: Vec<(usize, f64)>,
    /// Box on the log-regularization hyperparameters used for the reported constants.
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// Standard deviation of the ground-truth weight entries.
    pub signal: f64,
}

impl Default for HyperoptParams {
    fn default() -> Self {
        Self {
            classes: 5,
            features: 50,
            batch: 16,
            val_batch: 16,
            corruption: Vec::new(),
            lambda_lo: -2.0,
            lambda_hi: 2.0,
            signal: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    pub family: Family,
    pub horizon: usize,
    /// Stream seed. The runner overwrites this with a sub-seed of the master seed.
    pub seed: u64,
    pub drift: Drift,
    pub noise_std: f64,
    pub quadratic: QuadraticParams,
    pub hyper_rep: HyperRepParams,
    pub hyperopt: HyperoptParams,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            family: Family::Quadratic,
            horizon: 1000,
            seed: 0,
            drift: Drift::Static,
            noise_std: 0.0,
            quadratic: QuadraticParams::default(),
            hyper_rep: HyperRepParams::default(),
            hyperopt: HyperoptParams::default(),
        }
    }
}

impl StreamConfig {
    fn validate_common(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(OboError::Config("horizon must be at least 1".into()));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(OboError::Config(format!(
                "noise_std must be finite and non-negative, got {}",
                self.noise_std
            )));
        }
        self.drift.validate()
    }
}

/// A time-varying bilevel problem: one oracle per round `1..=horizon`.
pub trait ProblemStream: Send + Sync {
    fn family(&self) -> Family;
    fn horizon(&self) -> usize;
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;
    /// Oracle for round `t`; regenerated deterministically on every call.
    fn oracle(&self, t: usize) -> Result<Arc<dyn RoundOracle>>;
    fn constants(&self) -> RegularityConstants;
}

/// Iterates the stream's oracles in round order.
pub fn rounds(stream: &dyn ProblemStream) -> impl Iterator<Item = Result<Arc<dyn RoundOracle>>> + '_ {
    (1..=stream.horizon()).map(move |t| stream.oracle(t))
}

pub fn make_stream(cfg: &StreamConfig) -> Result<Box<dyn ProblemStream>> {
    Ok(match cfg.family {
        Family::Quadratic => Box::new(make_quadratic_stream(cfg)?),
        Family::HyperRep => Box::new(make_hr_stream(cfg)?),
        Family::Hyperopt => Box::new(make_ho_stream(cfg)?),
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sub-seed `splitmix64(master ^ splitmix64(tag))`.
pub fn split_seed(master: u64, tag: u64) -> u64 {
    splitmix64(master ^ splitmix64(tag))
}

/// Tags used with [`split_seed`].
pub mod seed_tags {
    /// Master seed → stream seed.
    pub const STREAM: u64 = 1;
    /// Master seed → initialization seed.
    pub const INIT: u64 = 2;
    /// Stream seed → quantities fixed for the whole stream.
    pub const FIXED: u64 = 0x100;
    /// Stream seed → stage `s` uses `STAGE + s`.
    pub const STAGE: u64 = 1 << 32;
    /// Stream seed → round `t` uses `ROUND + t`.
    pub const ROUND: u64 = 1 << 48;
}

pub(crate) fn rng_for(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split_seed(seed, tag))
}

pub(crate) fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> crate::types::Vector {
    use rand::Rng;
    crate::types::Vector::from_fn(n, |_, _| rng.sample(rand_distr::StandardNormal))
}

pub(crate) fn normal_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> crate::types::Matrix {
    use rand::Rng;
    // Filled row by row so the draw order matches the documented row-major layout.
    let mut m = crate::types::Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(rand_distr::StandardNormal);
        }
    }
    m
}
