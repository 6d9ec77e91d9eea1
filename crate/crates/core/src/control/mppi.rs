use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::cartpole::{cartpole_step, CartpoleParams, CartpoleState};
use super::rff::{model_input, RffMap};
use crate::conjugate::RegressionSampler;
use crate::error::{invalid, Result};

/// Cost assigned to rollouts that leave the finite state space.
const DIVERGED_COST: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MppiConfig {
    pub horizon: usize,
    pub num_samples: usize,
    /// Perturbation standard deviation in normalised action units.
    pub sampling_sd: f64,
    pub temperature: f64,
    /// Additive noise variance in learned-model rollouts.
    pub noise_variance: f64,
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self {
            horizon: 50,
            num_samples: 32,
            sampling_sd: 0.4f64.sqrt(),
            temperature: 0.5,
            noise_variance: 1e-6,
        }
    }
}

impl MppiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be positive"));
        }
        if self.num_samples == 0 {
            return Err(invalid("num_samples", "must be positive"));
        }
        for (name, v) in [
            ("sampling_sd", self.sampling_sd),
            ("temperature", self.temperature),
        ] {
            if !(v > 0.0) {
                return Err(invalid(name, format!("{v} must be positive")));
            }
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(invalid("noise_variance", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Dynamics used inside planning rollouts.
#[derive(Debug, Clone, Copy)]
pub enum PlannerModel<'a> {
    /// A fresh weight matrix is drawn from the belief for every rollout.
    Learned {
        sampler: &'a RegressionSampler,
        rff: &'a RffMap,
    },
    Exact(CartpoleParams),
}

/// Softmin weights `exp(-(c - min c) / temperature)`, normalised.
pub fn mppi_weights(costs: &[f64], temperature: f64) -> Vec<f64> {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = costs
        .iter()
        .map(|c| {
            let z = (c - min) / temperature;
            if z.is_nan() {
                1.0
            } else {
                (-z).exp()
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// A drawn linear model in row-major form for fast rollouts.
struct LinearModel {
    weights: Vec<f64>,
    d: usize,
}

impl LinearModel {
    fn new(m: &DMatrix<f64>) -> Self {
        let (o, d) = m.shape();
        let mut weights = Vec::with_capacity(o * d);
        for r in 0..o {
            weights.extend(m.row(r).iter());
        }
        Self { weights, d }
    }

    fn predict(&self, phi: &[f64], out: &mut [f64; 4]) {
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.weights[k * self.d..(k + 1) * self.d];
            *o = row.iter().zip(phi).map(|(a, b)| a * b).sum();
        }
    }
}

/// Receding-horizon path-integral planner over normalised actions in [-1, 1].
#[derive(Debug, Clone)]
pub struct Mppi {
    cfg: MppiConfig,
    nominal: Vec<f64>,
}

impl Mppi {
    pub fn new(cfg: MppiConfig) -> Result<Self> {
        cfg.validate()?;
        let nominal = vec![0.0; cfg.horizon];
        Ok(Self { cfg, nominal })
    }

    pub fn nominal(&self) -> &[f64] {
        &self.nominal
    }

    /// Optimises the nominal sequence from `state` and returns its first
    /// action; the sequence is then shifted one step with a zero tail.
    pub fn plan<R: Rng + ?Sized>(
        &mut self,
        model: PlannerModel<'_>,
        state: &CartpoleState,
        rng: &mut R,
    ) -> Result<f64> {
        let h = self.cfg.horizon;
        let k = self.cfg.num_samples;
        let perturb = Normal::new(0.0, self.cfg.sampling_sd).map_err(|e| invalid("sampling_sd", e.to_string()))?;
        let noise_sd = self.cfg.noise_variance.sqrt();
        let noise = Normal::new(0.0, noise_sd.max(f64::MIN_POSITIVE)).map_err(|e| invalid("noise_variance", e.to_string()))?;

        let mut eps = vec![0.0; k * h];
        let mut costs = vec![0.0; k];
        let mut phi = vec![0.0; if let PlannerModel::Learned { rff, .. } = model { rff.num_features() } else { 0 }];
        let mut delta = [0.0; 4];

        for j in 0..k {
            let drawn = match model {
                PlannerModel::Learned { sampler, .. } => Some(LinearModel::new(&sampler.draw(rng))),
                PlannerModel::Exact(_) => None,
            };
            let mut s = *state;
            let mut cost = 0.0;
            for t in 0..h {
                let u = (self.nominal[t] + perturb.sample(rng)).clamp(-1.0, 1.0);
                eps[j * h + t] = u - self.nominal[t];
                s = match (model, &drawn) {
                    (PlannerModel::Learned { rff, .. }, Some(m)) => {
                        rff.features_into(&model_input(&s, u), &mut phi);
                        m.predict(&phi, &mut delta);
                        if noise_sd > 0.0 {
                            for d in &mut delta {
                                *d += noise.sample(rng);
                            }
                        }
                        s.apply_delta(&delta)
                    }
                    (PlannerModel::Exact(p), _) => match cartpole_step(&s, u * p.force_limit, &p) {
                        Ok(next) => next,
                        Err(_) => {
                            cost = DIVERGED_COST;
                            break;
                        }
                    },
                    _ => unreachable!("learned models always draw weights"),
                };
                let c = -s.theta.cos();
                if !c.is_finite() || !s.x.is_finite() || !s.theta_dot.is_finite() {
                    cost = DIVERGED_COST;
                    break;
                }
                cost += c;
            }
            costs[j] = cost;
        }

        let weights = mppi_weights(&costs, self.cfg.temperature);
        for t in 0..h {
            let shift: f64 = (0..k).map(|j| weights[j] * eps[j * h + t]).sum();
            self.nominal[t] = (self.nominal[t] + shift).clamp(-1.0, 1.0);
        }
        let action = self.nominal[0];
        self.nominal.rotate_left(1);
        self.nominal[h - 1] = 0.0;
        Ok(action)
    }
}
