use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_weight, Conjugate, SuffStats};
use crate::error::{invalid, Error, Result};

/// Summary of a regression batch `(features: n x d, targets: n x o)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionStats {
    pub n: f64,
    /// `features^T features`, d x d.
    pub gram: DMatrix<f64>,
    /// `features^T targets`, d x o.
    pub cross: DMatrix<f64>,
    /// Column-wise `targets^T targets` diagonal, length o.
    pub sq_norm: DVector<f64>,
}

impl RegressionStats {
    pub fn zeros(d_feat: usize, d_out: usize) -> Self {
        Self {
            n: 0.0,
            gram: DMatrix::zeros(d_feat, d_feat),
            cross: DMatrix::zeros(d_feat, d_out),
            sq_norm: DVector::zeros(d_out),
        }
    }

    pub fn from_batch(features: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<Self> {
        if features.nrows() != targets.nrows() {
            return Err(Error::DimensionMismatch {
                what: "regression batch rows",
                expected: features.nrows(),
                actual: targets.nrows(),
            });
        }
        let gram = features.tr_mul(features);
        // Force exact symmetry; gemm accumulation order is not guaranteed.
        let gram = (&gram + gram.transpose()) * 0.5;
        let cross = features.tr_mul(targets);
        let sq_norm = DVector::from_iterator(
            targets.ncols(),
            targets.column_iter().map(|c| c.norm_squared()),
        );
        Ok(Self {
            n: features.nrows() as f64,
            gram,
            cross,
            sq_norm,
        })
    }

    pub fn d_feat(&self) -> usize {
        self.gram.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.cross.ncols()
    }

    fn check_shape(&self, d_feat: usize, d_out: usize) -> Result<()> {
        if self.d_feat() != d_feat {
            return Err(Error::DimensionMismatch {
                what: "regression feature dimension",
                expected: d_feat,
                actual: self.d_feat(),
            });
        }
        if self.d_out() != d_out {
            return Err(Error::DimensionMismatch {
                what: "regression output dimension",
                expected: d_out,
                actual: self.d_out(),
            });
        }
        Ok(())
    }
}

impl SuffStats for RegressionStats {
    fn merge(&self, other: &Self) -> Result<Self> {
        other.check_shape(self.d_feat(), self.d_out())?;
        Ok(Self {
            n: self.n + other.n,
            gram: &self.gram + &other.gram,
            cross: &self.cross + &other.cross,
            sq_norm: &self.sq_norm + &other.sq_norm,
        })
    }

    fn scale(&self, weight: f64) -> Result<Self> {
        check_weight(weight)?;
        Ok(Self {
            n: self.n * weight,
            gram: &self.gram * weight,
            cross: &self.cross * weight,
            sq_norm: &self.sq_norm * weight,
        })
    }

    fn zero_like(&self) -> Self {
        Self::zeros(self.d_feat(), self.d_out())
    }

    fn count(&self) -> f64 {
        self.n
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.d_feat() == other.d_feat() && self.d_out() == other.d_out()
    }
}

fn factor(precision: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(precision.clone())
        .ok_or_else(|| Error::Numerical(format!("{context}: precision is not positive definite")))
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Matrix-normal belief over an `o x d` weight matrix whose rows are
/// independent and share one precision matrix. Observation noise is
/// isotropic with known variance.
#[derive(Debug, Clone)]
pub struct RegressionBelief {
    mean: DMatrix<f64>,
    precision: DMatrix<f64>,
    noise_variance: f64,
    log_det_precision: f64,
}

impl RegressionBelief {
    pub fn new(mean: DMatrix<f64>, precision: DMatrix<f64>, noise_variance: f64) -> Result<Self> {
        let d = mean.ncols();
        if precision.nrows() != d || precision.ncols() != d {
            return Err(Error::DimensionMismatch {
                what: "precision matrix",
                expected: d,
                actual: precision.nrows(),
            });
        }
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(invalid(
                "noise_variance",
                format!("{noise_variance} must be positive and finite"),
            ));
        }
        let asym = (&precision - precision.transpose()).abs().max();
        if asym > 1e-9 * precision.abs().max().max(1.0) {
            return Err(invalid("precision", format!("not symmetric (max asymmetry {asym:e})")));
        }
        let chol = factor(&precision, "regression belief")?;
        Ok(Self {
            mean,
            log_det_precision: log_det(&chol),
            precision,
            noise_variance,
        })
    }

    /// Zero-mean prior with precision `prior_precision * I`.
    pub fn isotropic(d_out: usize, d_feat: usize, prior_precision: f64, noise_variance: f64) -> Result<Self> {
        if !(prior_precision > 0.0 && prior_precision.is_finite()) {
            return Err(invalid(
                "prior_precision",
                format!("{prior_precision} must be positive and finite"),
            ));
        }
        Self::new(
            DMatrix::zeros(d_out, d_feat),
            DMatrix::identity(d_feat, d_feat) * prior_precision,
            noise_variance,
        )
    }

    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn log_det_precision(&self) -> f64 {
        self.log_det_precision
    }

    pub fn d_feat(&self) -> usize {
        self.mean.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.mean.nrows()
    }

    /// Posterior-mean prediction `mean * features`.
    pub fn predict(&self, features: &DVector<f64>) -> DVector<f64> {
        &self.mean * features
    }

    pub fn sampler(&self) -> Result<RegressionSampler> {
        let chol = factor(&self.precision, "regression sampler")?;
        Ok(RegressionSampler {
            mean: self.mean.clone(),
            upper: chol.l().transpose(),
        })
    }

    /// `P M^T + C / s2`, the natural location parameter after absorbing `stats`.
    fn natural_location(&self, stats: &RegressionStats) -> DMatrix<f64> {
        let mut b = &self.precision * self.mean.transpose();
        b += &stats.cross / self.noise_variance;
        b
    }
}

impl Conjugate for RegressionBelief {
    type Stats = RegressionStats;
    type Draw = DMatrix<f64>;

    fn posterior(&self, stats: &RegressionStats) -> Result<Self> {
        stats.check_shape(self.d_feat(), self.d_out())?;
        let precision = &self.precision + &stats.gram / self.noise_variance;
        let chol = factor(&precision, "regression posterior")?;
        let location = self.natural_location(stats);
        let mean_t = chol.solve(&location);
        Ok(Self {
            mean: mean_t.transpose(),
            log_det_precision: log_det(&chol),
            precision,
            noise_variance: self.noise_variance,
        })
    }

    fn log_marginal(&self, stats: &RegressionStats) -> Result<f64> {
        stats.check_shape(self.d_feat(), self.d_out())?;
        let s2 = self.noise_variance;
        let o = self.d_out() as f64;
        let post_precision = &self.precision + &stats.gram / s2;
        let chol = factor(&post_precision, "regression evidence")?;
        let location = self.natural_location(stats);
        let quad_post = location.dot(&chol.solve(&location));
        let prior_loc = &self.precision * self.mean.transpose();
        let quad_prior = self.mean.transpose().dot(&prior_loc);
        let value = -0.5 * stats.n * o * (2.0 * std::f64::consts::PI * s2).ln()
            + 0.5 * o * (self.log_det_precision - log_det(&chol))
            - 0.5 * (stats.sq_norm.sum() / s2 + quad_prior - quad_post);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Numerical(format!("regression evidence is {value}")))
        }
    }

    fn kl_to(&self, base: &Self) -> Result<f64> {
        if base.d_feat() != self.d_feat() || base.d_out() != self.d_out() {
            return Err(Error::DimensionMismatch {
                what: "regression KL operands",
                expected: self.d_feat(),
                actual: base.d_feat(),
            });
        }
        let d = self.d_feat() as f64;
        let o = self.d_out() as f64;
        let chol = factor(&self.precision, "regression KL")?;
        let trace = chol.solve(&base.precision).trace();
        let diff_t = (&self.mean - &base.mean).transpose();
        let quad = diff_t.dot(&(&base.precision * &diff_t));
        let kl = 0.5 * o * (trace - d + self.log_det_precision - base.log_det_precision) + 0.5 * quad;
        Ok(kl.max(0.0))
    }

    fn variance(&self) -> Result<f64> {
        let chol = factor(&self.precision, "regression variance")?;
        Ok(chol.inverse().trace())
    }

    fn mean_summary(&self) -> f64 {
        self.mean.mean()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DMatrix<f64>> {
        Ok(self.sampler()?.draw(rng))
    }

    fn zero_stats(&self) -> RegressionStats {
        RegressionStats::zeros(self.d_feat(), self.d_out())
    }
}

/// Cached factorisation for repeated weight-matrix draws.
#[derive(Debug, Clone)]
pub struct RegressionSampler {
    mean: DMatrix<f64>,
    /// Upper Cholesky factor `L^T` of the shared row precision.
    upper: DMatrix<f64>,
}

impl RegressionSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let (o, d) = self.mean.shape();
        let z = DMatrix::from_fn(d, o, |_, _| StandardNormal.sample(rng));
        // x = L^{-T} z has covariance P^{-1}.
        let x = self
            .upper
            .solve_upper_triangular(&z)
            .expect("cholesky factor has a positive diagonal");
        &self.mean + x.transpose()
    }

    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }
}
