use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_weight, normal_log_pdf, Conjugate, SuffStats};
use crate::error::{invalid, Error, Result};

/// Summary of scalar Gaussian observations. `sum_sq` is needed for the exact
/// evidence; the posterior itself only depends on `n` and `sum_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianStats {
    pub n: f64,
    pub sum_y: f64,
    pub sum_sq: f64,
}

impl GaussianStats {
    pub const ZERO: GaussianStats = GaussianStats {
        n: 0.0,
        sum_y: 0.0,
        sum_sq: 0.0,
    };

    pub fn from_observations(ys: &[f64]) -> Self {
        ys.iter().fold(Self::ZERO, |acc, &y| Self {
            n: acc.n + 1.0,
            sum_y: acc.sum_y + y,
            sum_sq: acc.sum_sq + y * y,
        })
    }

    pub fn single(y: f64) -> Self {
        Self {
            n: 1.0,
            sum_y: y,
            sum_sq: y * y,
        }
    }
}

impl SuffStats for GaussianStats {
    fn merge(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            n: self.n + other.n,
            sum_y: self.sum_y + other.sum_y,
            sum_sq: self.sum_sq + other.sum_sq,
        })
    }

    fn scale(&self, weight: f64) -> Result<Self> {
        check_weight(weight)?;
        Ok(Self {
            n: self.n * weight,
            sum_y: self.sum_y * weight,
            sum_sq: self.sum_sq * weight,
        })
    }

    fn zero_like(&self) -> Self {
        Self::ZERO
    }

    fn count(&self) -> f64 {
        self.n
    }
}

/// N(mean, variance) belief over the mean of observations with known
/// variance `noise_variance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    mean: f64,
    variance: f64,
    noise_variance: f64,
}

impl GaussianBelief {
    pub fn new(mean: f64, variance: f64, noise_variance: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(invalid("mean", format!("{mean} is not finite")));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(invalid("variance", format!("{variance} must be positive and finite")));
        }
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(invalid(
                "noise_variance",
                format!("{noise_variance} must be positive and finite"),
            ));
        }
        Ok(Self {
            mean,
            variance,
            noise_variance,
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Log density of a single new observation under the prior predictive
    /// N(mean, variance + noise_variance).
    pub fn predictive_log_pdf(&self, y: f64) -> f64 {
        normal_log_pdf(y, self.mean, self.variance + self.noise_variance)
    }
}

impl Conjugate for GaussianBelief {
    type Stats = GaussianStats;
    type Draw = f64;

    fn posterior(&self, stats: &GaussianStats) -> Result<Self> {
        if stats.n < 0.0 {
            return Err(invalid("n", format!("{} is negative", stats.n)));
        }
        let precision = 1.0 / self.variance + stats.n / self.noise_variance;
        let variance = 1.0 / precision;
        let mean = variance * (self.mean / self.variance + stats.sum_y / self.noise_variance);
        Self::new(mean, variance, self.noise_variance)
            .map_err(|e| Error::Numerical(format!("gaussian update failed: {e}")))
    }

    fn log_marginal(&self, stats: &GaussianStats) -> Result<f64> {
        let post = self.posterior(stats)?;
        let s2 = self.noise_variance;
        let value = -0.5 * stats.n * (2.0 * std::f64::consts::PI * s2).ln()
            + 0.5 * (post.variance / self.variance).ln()
            - 0.5
                * (stats.sum_sq / s2 + self.mean * self.mean / self.variance
                    - post.mean * post.mean / post.variance);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Numerical(format!("gaussian evidence is {value}")))
        }
    }

    fn kl_to(&self, base: &Self) -> Result<f64> {
        let ratio = self.variance / base.variance;
        let d = self.mean - base.mean;
        let kl = 0.5 * (ratio + d * d / base.variance - 1.0 - ratio.ln());
        Ok(kl.max(0.0))
    }

    fn variance(&self) -> Result<f64> {
        Ok(self.variance)
    }

    fn mean_summary(&self) -> f64 {
        self.mean
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let z: f64 = StandardNormal.sample(rng);
        Ok(self.mean + self.variance.sqrt() * z)
    }

    fn zero_stats(&self) -> GaussianStats {
        GaussianStats::ZERO
    }
}
