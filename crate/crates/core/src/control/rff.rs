use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::cartpole::CartpoleState;
use crate::error::{invalid, Result};

/// Model input width: `[x, x_dot, sin theta, cos theta, theta_dot, action]`.
pub const INPUT_DIM: usize = 6;

pub fn model_input(s: &CartpoleState, action: f64) -> [f64; INPUT_DIM] {
    let (sin, cos) = s.theta.sin_cos();
    [s.x, s.x_dot, sin, cos, s.theta_dot, action]
}

/// Random Fourier features `sqrt(2/D) cos(omega z / bandwidth + b)` for an
/// RBF kernel of the given bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffMap {
    /// Row-major `D x d_in`, already divided by the bandwidth.
    frequencies: Vec<f64>,
    phases: Vec<f64>,
    d_in: usize,
    bandwidth: f64,
    scale: f64,
}

impl RffMap {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, d_in: usize, num_features: usize, bandwidth: f64) -> Result<Self> {
        if num_features == 0 {
            return Err(invalid("num_features", "must be positive"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(invalid("bandwidth", format!("{bandwidth} must be positive")));
        }
        let frequencies = (0..num_features * d_in)
            .map(|_| {
                let w: f64 = StandardNormal.sample(rng);
                w / bandwidth
            })
            .collect();
        let phase = Uniform::new(0.0, 2.0 * std::f64::consts::PI).expect("valid range");
        let phases = (0..num_features).map(|_| phase.sample(rng)).collect();
        Ok(Self {
            frequencies,
            phases,
            d_in,
            bandwidth,
            scale: (2.0 / num_features as f64).sqrt(),
        })
    }

    pub fn num_features(&self) -> usize {
        self.phases.len()
    }

    pub fn input_dim(&self) -> usize {
        self.d_in
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Writes the features of `z` into `out`.
    pub fn features_into(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.d_in);
        for (i, (o, b)) in out.iter_mut().zip(&self.phases).enumerate() {
            let row = &self.frequencies[i * self.d_in..(i + 1) * self.d_in];
            let arg: f64 = row.iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + b;
            *o = self.scale * arg.cos();
        }
    }

    pub fn features(&self, z: &[f64]) -> DVector<f64> {
        let mut out = vec![0.0; self.num_features()];
        self.features_into(z, &mut out);
        DVector::from_vec(out)
    }

    /// Stacks the features of each input as rows.
    pub fn feature_matrix(&self, inputs: &[[f64; INPUT_DIM]]) -> DMatrix<f64> {
        let d = self.num_features();
        let mut m = DMatrix::zeros(inputs.len(), d);
        let mut row = vec![0.0; d];
        for (r, z) in inputs.iter().enumerate() {
            self.features_into(z, &mut row);
            for (c, v) in row.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        m
    }
}
