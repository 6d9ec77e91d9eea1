//! Cart-pole swing-up with learned random-Fourier-feature dynamics and MPPI
//! planning, plus the episodic and continual adaptation experiments.

mod cartpole;
mod experiments;
mod mppi;
mod rff;
mod trial;

pub use cartpole::{
    accelerations, cartpole_energy, cartpole_step, wrap_angle, CartpoleParams, CartpoleState, EARTH, MARS,
    NEPTUNE,
};
pub use experiments::{
    continual_experiment, episodic_experiment, CartpoleRecord, ContinualConfig, ContinualLearner, EpisodicConfig,
    ModelConfig,
};
pub use mppi::{mppi_weights, Mppi, MppiConfig, PlannerModel};
pub use rff::{model_input, RffMap, INPUT_DIM};
pub use trial::{initial_state, run_trial, TrialBatch, TrialOutcome, TrialPolicy};
