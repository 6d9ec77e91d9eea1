use nalgebra::DMatrix;
use rand::Rng;

use super::cartpole::{cartpole_step, CartpoleParams, CartpoleState};
use super::mppi::{Mppi, MppiConfig, PlannerModel};
use super::rff::{model_input, RffMap, INPUT_DIM};
use crate::conjugate::{RegressionBelief, RegressionStats};
use crate::error::{invalid, Result};

/// Transitions of one trial: model inputs and state-difference targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialBatch {
    pub inputs: Vec<[f64; INPUT_DIM]>,
    pub targets: Vec<[f64; 4]>,
}

impl TrialBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn stats(&self, rff: &RffMap) -> Result<RegressionStats> {
        let features = rff.feature_matrix(&self.inputs);
        let targets = DMatrix::from_fn(self.targets.len(), 4, |r, c| self.targets[r][c]);
        RegressionStats::from_batch(&features, &targets)
    }
}

/// How actions are chosen during a trial.
#[derive(Debug, Clone, Copy)]
pub enum TrialPolicy<'a> {
    /// MPPI with rollouts under models drawn from the belief.
    Belief(&'a RegressionBelief),
    /// MPPI with the true dynamics.
    Exact(CartpoleParams),
    /// Uniform random actions.
    Random,
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub batch: TrialBatch,
    /// Mean cosine of the pole angle over the trial.
    pub score: f64,
}

/// Initial state: pole down, other coordinates uniform in (-0.05, 0.05).
pub fn initial_state<R: Rng + ?Sized>(rng: &mut R) -> CartpoleState {
    let mut u = || rng.random_range(-0.05..0.05);
    CartpoleState {
        x: u(),
        x_dot: u(),
        theta: std::f64::consts::PI,
        theta_dot: u(),
    }
}

/// Runs `length` control steps on the true system `env` and records the
/// transitions.
pub fn run_trial<R: Rng + ?Sized>(
    policy: TrialPolicy<'_>,
    rff: &RffMap,
    env: &CartpoleParams,
    mppi: &MppiConfig,
    length: usize,
    rng: &mut R,
) -> Result<TrialOutcome> {
    if length == 0 {
        return Err(invalid("trial_length", "a trial needs at least one step"));
    }
    env.validate()?;
    let sampler = match policy {
        TrialPolicy::Belief(b) => Some(b.sampler()?),
        _ => None,
    };
    let mut planner = Mppi::new(mppi.clone())?;
    let mut state = initial_state(rng);
    let mut batch = TrialBatch {
        inputs: Vec::with_capacity(length),
        targets: Vec::with_capacity(length),
    };
    let mut total = 0.0;
    for _ in 0..length {
        let action = match (policy, &sampler) {
            (TrialPolicy::Belief(_), Some(sampler)) => {
                planner.plan(PlannerModel::Learned { sampler, rff }, &state, rng)?
            }
            (TrialPolicy::Exact(p), _) => planner.plan(PlannerModel::Exact(p), &state, rng)?,
            _ => rng.random_range(-1.0..=1.0),
        };
        let next = cartpole_step(&state, action * env.force_limit, env)?;
        batch.inputs.push(model_input(&state, action));
        batch.targets.push(state.delta_to(&next));
        total += next.theta.cos();
        state = next;
    }
    Ok(TrialOutcome {
        batch,
        score: total / length as f64,
    })
}
