//! Online Bayesian inference with a selectable memory of past batches.
//!
//! The agent keeps every past batch (as sufficient statistics) and, for each
//! new batch, picks a binary readout of which past batches form its prior by
//! maximising a penalised marginal likelihood. Recursive Bayes, exponential
//! forgetting, power priors and unlearning all fall out as fixed readouts.
//!
//! Modules:
//! - [`conjugate`]: exact conjugate beliefs and sufficient statistics.
//! - [`memory`]: the memory buffer, prior construction and weight selection.
//! - [`baselines`]: recursive Bayes, forgetting, power prior, unlearning, BOCD.
//! - [`bandit`]: switching-arm bandit environment and agents.
//! - [`control`]: cartpole swing-up with learned RFF dynamics and MPPI.
//! - [`domains`]: IDX ingestion and rotated-digit domain adaptation.
//! - [`experiment`]: configuration, orchestration and output.

pub mod bandit;
pub mod baselines;
pub mod conjugate;
pub mod control;
pub mod domains;
mod error;
pub mod experiment;
pub mod memory;
pub mod rng;
pub mod stats;

pub use conjugate::{
    Belief, BetaBelief, BinomialStats, Conjugate, GaussianBelief, GaussianStats, RegressionBelief,
    RegressionStats, SuffStats, SufficientStats,
};
pub use error::{Error, Result};
pub use memory::{BatchId, MemoryBuffer, ReadoutWeights, SelectionConfig, Strategy};
pub use rng::{StreamFactory, StreamRng};
