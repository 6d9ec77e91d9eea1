use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::{check_weight, digamma, ln_beta, ln_binomial, Conjugate, SuffStats};
use crate::error::{invalid, Error, Result};

/// Binomial batch summary. `log_coef` accumulates the log binomial
/// coefficients of the individual draws so the evidence stays exact (and
/// additive) after merging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialStats {
    pub successes: f64,
    pub trials: f64,
    pub log_coef: f64,
}

impl BinomialStats {
    pub const ZERO: BinomialStats = BinomialStats {
        successes: 0.0,
        trials: 0.0,
        log_coef: 0.0,
    };

    /// One binomial draw of `successes` out of `trials`.
    pub fn draw(successes: u64, trials: u64) -> Result<Self> {
        if successes > trials {
            return Err(invalid(
                "successes",
                format!("{successes} successes exceed {trials} trials"),
            ));
        }
        let (k, n) = (successes as f64, trials as f64);
        Ok(Self {
            successes: k,
            trials: n,
            log_coef: ln_binomial(n, k),
        })
    }

    /// Summary of a batch of `(successes, trials)` draws.
    pub fn from_draws(draws: &[(u64, u64)]) -> Result<Self> {
        draws.iter().try_fold(Self::ZERO, |acc, &(k, n)| acc.merge(&Self::draw(k, n)?))
    }

    /// Summary of Bernoulli outcomes.
    pub fn from_bernoulli(outcomes: &[bool]) -> Self {
        let k = outcomes.iter().filter(|&&b| b).count() as f64;
        Self {
            successes: k,
            trials: outcomes.len() as f64,
            log_coef: 0.0,
        }
    }

    pub fn failures(&self) -> f64 {
        self.trials - self.successes
    }
}

impl SuffStats for BinomialStats {
    fn merge(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            successes: self.successes + other.successes,
            trials: self.trials + other.trials,
            log_coef: self.log_coef + other.log_coef,
        })
    }

    fn scale(&self, weight: f64) -> Result<Self> {
        check_weight(weight)?;
        Ok(Self {
            successes: self.successes * weight,
            trials: self.trials * weight,
            log_coef: self.log_coef * weight,
        })
    }

    fn zero_like(&self) -> Self {
        Self::ZERO
    }

    fn count(&self) -> f64 {
        self.trials
    }

    fn dedup_key(&self) -> Option<[u64; 3]> {
        Some([
            self.successes.to_bits(),
            self.trials.to_bits(),
            self.log_coef.to_bits(),
        ])
    }
}

/// Beta(alpha, beta) belief over a success probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaBelief {
    alpha: f64,
    beta: f64,
}

impl BetaBelief {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid("alpha", format!("{alpha} must be positive and finite")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid("beta", format!("{beta} must be positive and finite")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn uniform() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

impl Conjugate for BetaBelief {
    type Stats = BinomialStats;
    type Draw = f64;

    fn posterior(&self, stats: &BinomialStats) -> Result<Self> {
        let failures = stats.failures();
        if stats.successes < 0.0 || failures < 0.0 {
            return Err(invalid("stats", format!("{stats:?} has negative counts")));
        }
        Self::new(self.alpha + stats.successes, self.beta + failures)
    }

    fn log_marginal(&self, stats: &BinomialStats) -> Result<f64> {
        let post = self.posterior(stats)?;
        let value = stats.log_coef + ln_beta(post.alpha, post.beta) - ln_beta(self.alpha, self.beta);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Numerical(format!("beta-binomial evidence is {value}")))
        }
    }

    fn kl_to(&self, base: &Self) -> Result<f64> {
        let (a1, b1, a0, b0) = (self.alpha, self.beta, base.alpha, base.beta);
        let kl = ln_beta(a0, b0) - ln_beta(a1, b1)
            + (a1 - a0) * digamma(a1)
            + (b1 - b0) * digamma(b1)
            + (a0 - a1 + b0 - b1) * digamma(a1 + b1);
        // Rounding can push an exact zero slightly negative.
        Ok(kl.max(0.0))
    }

    fn variance(&self) -> Result<f64> {
        let s = self.alpha + self.beta;
        Ok(self.alpha * self.beta / (s * s * (s + 1.0)))
    }

    fn mean_summary(&self) -> f64 {
        self.mean()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let dist = Beta::new(self.alpha, self.beta).map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(dist.sample(rng))
    }

    fn zero_stats(&self) -> BinomialStats {
        BinomialStats::ZERO
    }
}
