//! Experiment configuration, orchestration and output.
//!
//! A run is described by an [`ExperimentConfig`]: a built-in profile preset
//! (`desk` or `full`) optionally overridden by a TOML file. [`run`] fans the
//! seeds out over a worker pool and [`write_outputs`] emits sorted CSV rows, a
//! JSON summary of medians and 10-90% bands, and the resolved config.

mod config;
mod output;
mod run;

pub use config::{BanditConfig, ExperimentConfig, ExperimentKind, InferConfig, InferMethod, Profile, Settings};
pub use output::{emit, read_csv, sort_records, summarize, write_csv, Band, Record, Series, Summary};
pub use run::{
    run, run_bandit, run_cartpole_continual, run_cartpole_episodic, run_infer, run_mnist, write_outputs,
    BanditRecord, InferRecord, Records, BANDIT_HEADER, CARTPOLE_HEADER, INFER_HEADER, MNIST_HEADER,
};
