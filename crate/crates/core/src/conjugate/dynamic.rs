//! Family-tagged wrappers for code that handles beliefs generically at runtime
//! (configuration-driven experiments, mixed diagnostics).

use nalgebra::DMatrix;
use rand::Rng;

use super::{
    BetaBelief, BinomialStats, Conjugate, GaussianBelief, GaussianStats, RegressionBelief,
    RegressionStats, SuffStats,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Binomial,
    Gaussian,
    Regression,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Binomial => "binomial",
            Family::Gaussian => "gaussian",
            Family::Regression => "regression",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SufficientStats {
    Binomial(BinomialStats),
    Gaussian(GaussianStats),
    Regression(RegressionStats),
}

#[derive(Debug, Clone)]
pub enum Belief {
    Beta(BetaBelief),
    Gaussian(GaussianBelief),
    Regression(RegressionBelief),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamDraw {
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

fn mismatch(expected: Family, actual: Family) -> Error {
    Error::FamilyMismatch {
        expected: expected.name(),
        actual: actual.name(),
    }
}

impl SufficientStats {
    pub fn family(&self) -> Family {
        match self {
            SufficientStats::Binomial(_) => Family::Binomial,
            SufficientStats::Gaussian(_) => Family::Gaussian,
            SufficientStats::Regression(_) => Family::Regression,
        }
    }
}

impl Belief {
    pub fn family(&self) -> Family {
        match self {
            Belief::Beta(_) => Family::Binomial,
            Belief::Gaussian(_) => Family::Gaussian,
            Belief::Regression(_) => Family::Regression,
        }
    }
}

impl SuffStats for SufficientStats {
    fn merge(&self, other: &Self) -> Result<Self> {
        use SufficientStats::*;
        match (self, other) {
            (Binomial(a), Binomial(b)) => Ok(Binomial(a.merge(b)?)),
            (Gaussian(a), Gaussian(b)) => Ok(Gaussian(a.merge(b)?)),
            (Regression(a), Regression(b)) => Ok(Regression(a.merge(b)?)),
            (a, b) => Err(mismatch(a.family(), b.family())),
        }
    }

    fn scale(&self, weight: f64) -> Result<Self> {
        use SufficientStats::*;
        Ok(match self {
            Binomial(s) => Binomial(s.scale(weight)?),
            Gaussian(s) => Gaussian(s.scale(weight)?),
            Regression(s) => Regression(s.scale(weight)?),
        })
    }

    fn zero_like(&self) -> Self {
        use SufficientStats::*;
        match self {
            Binomial(s) => Binomial(s.zero_like()),
            Gaussian(s) => Gaussian(s.zero_like()),
            Regression(s) => Regression(s.zero_like()),
        }
    }

    fn count(&self) -> f64 {
        use SufficientStats::*;
        match self {
            Binomial(s) => s.count(),
            Gaussian(s) => s.count(),
            Regression(s) => s.count(),
        }
    }

    fn same_shape(&self, other: &Self) -> bool {
        use SufficientStats::*;
        match (self, other) {
            (Binomial(_), Binomial(_)) | (Gaussian(_), Gaussian(_)) => true,
            (Regression(a), Regression(b)) => a.same_shape(b),
            _ => false,
        }
    }

    fn dedup_key(&self) -> Option<[u64; 3]> {
        match self {
            SufficientStats::Binomial(s) => s.dedup_key(),
            _ => None,
        }
    }
}

impl Conjugate for Belief {
    type Stats = SufficientStats;
    type Draw = ParamDraw;

    fn posterior(&self, stats: &SufficientStats) -> Result<Self> {
        match (self, stats) {
            (Belief::Beta(b), SufficientStats::Binomial(s)) => Ok(Belief::Beta(b.posterior(s)?)),
            (Belief::Gaussian(b), SufficientStats::Gaussian(s)) => Ok(Belief::Gaussian(b.posterior(s)?)),
            (Belief::Regression(b), SufficientStats::Regression(s)) => {
                Ok(Belief::Regression(b.posterior(s)?))
            }
            (b, s) => Err(mismatch(b.family(), s.family())),
        }
    }

    fn log_marginal(&self, stats: &SufficientStats) -> Result<f64> {
        match (self, stats) {
            (Belief::Beta(b), SufficientStats::Binomial(s)) => b.log_marginal(s),
            (Belief::Gaussian(b), SufficientStats::Gaussian(s)) => b.log_marginal(s),
            (Belief::Regression(b), SufficientStats::Regression(s)) => b.log_marginal(s),
            (b, s) => Err(mismatch(b.family(), s.family())),
        }
    }

    fn kl_to(&self, base: &Self) -> Result<f64> {
        match (self, base) {
            (Belief::Beta(a), Belief::Beta(b)) => a.kl_to(b),
            (Belief::Gaussian(a), Belief::Gaussian(b)) => a.kl_to(b),
            (Belief::Regression(a), Belief::Regression(b)) => a.kl_to(b),
            (a, b) => Err(mismatch(b.family(), a.family())),
        }
    }

    fn variance(&self) -> Result<f64> {
        match self {
            Belief::Beta(b) => b.variance(),
            Belief::Gaussian(b) => b.variance(),
            Belief::Regression(b) => b.variance(),
        }
    }

    fn mean_summary(&self) -> f64 {
        match self {
            Belief::Beta(b) => b.mean_summary(),
            Belief::Gaussian(b) => b.mean_summary(),
            Belief::Regression(b) => b.mean_summary(),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParamDraw> {
        Ok(match self {
            Belief::Beta(b) => ParamDraw::Scalar(b.sample(rng)?),
            Belief::Gaussian(b) => ParamDraw::Scalar(b.sample(rng)?),
            Belief::Regression(b) => ParamDraw::Matrix(b.sample(rng)?),
        })
    }

    fn zero_stats(&self) -> SufficientStats {
        match self {
            Belief::Beta(b) => SufficientStats::Binomial(b.zero_stats()),
            Belief::Gaussian(b) => SufficientStats::Gaussian(b.zero_stats()),
            Belief::Regression(b) => SufficientStats::Regression(b.zero_stats()),
        }
    }
}
