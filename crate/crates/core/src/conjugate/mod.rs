//! Exact conjugate-prior beliefs.
//!
//! Three families are supported: Beta–Binomial, Gaussian with known
//! observation variance, and matrix-Gaussian linear regression with known
//! noise variance and independent output rows. Observations are summarised by
//! additive sufficient statistics, which is what the memory buffer stores.
//!
//! Beliefs are immutable values: every update returns a new belief.

mod beta;
mod dynamic;
mod gaussian;
mod regression;

pub use beta::{BetaBelief, BinomialStats};
pub use dynamic::{Belief, Family, ParamDraw, SufficientStats};
pub use gaussian::{GaussianBelief, GaussianStats};
pub use regression::{RegressionBelief, RegressionSampler, RegressionStats};

use std::fmt::Debug;

use rand::Rng;

use crate::error::{invalid, Result};

/// Additive summary of a batch of observations.
///
/// `merge` is commutative and associative with `zero_like` as identity;
/// `scale` multiplies every additive field, which is exact tempering of the
/// likelihood for exponential families.
pub trait SuffStats: Clone + Debug + Send + Sync {
    fn merge(&self, other: &Self) -> Result<Self>;

    fn scale(&self, weight: f64) -> Result<Self>;

    fn zero_like(&self) -> Self;

    /// Number of observations summarised (may be fractional after scaling).
    fn count(&self) -> f64;

    /// Whether `other` could be merged with `self`.
    fn same_shape(&self, _other: &Self) -> bool {
        true
    }

    /// Exact bitwise identity key, for families where many batches share the
    /// same statistics. Two batches with equal keys yield identical updates.
    fn dedup_key(&self) -> Option<[u64; 3]> {
        None
    }
}

/// A conjugate belief over the parameters of one likelihood family.
pub trait Conjugate: Clone + Debug + Send + Sync {
    type Stats: SuffStats;
    type Draw;

    fn posterior(&self, stats: &Self::Stats) -> Result<Self>;

    /// Log evidence of the summarised batch under this belief's prior
    /// predictive, including all data-dependent normalising constants.
    fn log_marginal(&self, stats: &Self::Stats) -> Result<f64>;

    /// KL(self || base).
    fn kl_to(&self, base: &Self) -> Result<f64>;

    /// Posterior variance (scalar families) or per-row covariance trace.
    fn variance(&self) -> Result<f64>;

    fn mean_summary(&self) -> f64;

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Self::Draw>;

    /// Empty statistics with this belief's shape.
    fn zero_stats(&self) -> Self::Stats;
}

pub(crate) fn check_weight(weight: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&weight) || weight.is_nan() {
        return Err(invalid("weight", format!("{weight} is outside [0, 1]")));
    }
    Ok(())
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// log C(n, k) for real-valued counts.
pub fn ln_binomial(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// Log density of N(mean, variance) at `x`.
pub fn normal_log_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * variance).ln() + d * d / variance)
}
