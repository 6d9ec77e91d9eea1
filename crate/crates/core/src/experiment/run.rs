use std::path::{Path, PathBuf};

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BanditConfig, ExperimentConfig, InferConfig, InferMethod, Settings};
use super::output::{emit, Record};
use crate::bandit::{run_agent, BanditEnv};
use crate::baselines::{bocd_step, forgetting_step, power_prior_step, ForgettingState, RunLengthDistribution};
use crate::conjugate::{BetaBelief, BinomialStats, Conjugate};
use crate::control::{continual_experiment, episodic_experiment, CartpoleRecord, ContinualConfig, EpisodicConfig};
use crate::domains::{mnist_experiment, IdxDataset, MnistConfig, MnistRecord};
use crate::error::{config, Error, Result};
use crate::memory::{bam_step, MemoryBuffer, SelectionConfig};
use crate::rng::StreamFactory;

/// One step of one learner in the sinusoid-tracking experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferRecord {
    pub method: String,
    pub seed: u64,
    pub t: u64,
    pub theta: f64,
    pub mean: f64,
    pub log_variance: f64,
    /// Run-length-averaged mean (BOCD only).
    pub mixture_mean: Option<f64>,
    /// Changepoint flag (BOCD only).
    pub changepoint: Option<bool>,
    /// Number of selected batches (BAM only).
    pub selected: Option<usize>,
}

pub const INFER_HEADER: [&str; 9] =
    ["method", "seed", "t", "theta", "mean", "log_variance", "mixture_mean", "changepoint", "selected"];

impl Record for InferRecord {
    fn method(&self) -> &str {
        &self.method
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn index(&self) -> u64 {
        self.t
    }
    fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("mean", self.mean),
            ("log_variance", self.log_variance),
            ("abs_error", (self.mean - self.theta).abs()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditRecord {
    pub arms: usize,
    pub config_id: u64,
    pub seed: u64,
    pub t: u64,
    pub agent: String,
    pub regret: f64,
}

pub const BANDIT_HEADER: [&str; 6] = ["arms", "config_id", "seed", "t", "agent", "regret"];

impl Record for BanditRecord {
    fn method(&self) -> &str {
        &self.agent
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn group(&self) -> String {
        format!("arms={}", self.arms)
    }
    fn extra_keys(&self) -> Vec<u64> {
        vec![self.config_id]
    }
    fn index(&self) -> u64 {
        self.t
    }
    fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![("regret", self.regret)]
    }
}

pub const CARTPOLE_HEADER: [&str; 8] =
    ["experiment", "seed", "episode", "trial", "method", "score", "optimizations", "changepoint"];

impl Record for CartpoleRecord {
    fn method(&self) -> &str {
        &self.method
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn group(&self) -> String {
        if self.experiment == "cartpole-episodic" {
            format!("episode={:02}", self.episode)
        } else {
            String::new()
        }
    }
    fn index(&self) -> u64 {
        self.trial as u64
    }
    fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![("score", self.score), ("optimizations", self.optimizations as f64)]
    }
}

pub const MNIST_HEADER: [&str; 6] = ["seed", "test_domain", "angle", "method", "accuracy", "selected"];

impl Record for MnistRecord {
    fn method(&self) -> &str {
        &self.method
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn index(&self) -> u64 {
        self.test_domain as u64
    }
    fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![("accuracy", self.accuracy), ("selected", self.selected as f64)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Infer(Vec<InferRecord>),
    Bandit(Vec<BanditRecord>),
    Cartpole(Vec<CartpoleRecord>),
    Mnist(Vec<MnistRecord>),
}

impl Records {
    pub fn len(&self) -> usize {
        match self {
            Records::Infer(r) => r.len(),
            Records::Bandit(r) => r.len(),
            Records::Cartpole(r) => r.len(),
            Records::Mnist(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(config("seeds", "seed list is empty"));
    }
    Ok(())
}

fn flatten<R>(nested: Vec<Vec<R>>) -> Vec<R> {
    nested.into_iter().flatten().collect()
}

/// Sinusoidal Binomial tracking with every configured learner on the same
/// draws per seed.
pub fn run_infer(cfg: &InferConfig, seeds: &[u64], streams: &StreamFactory) -> Result<Vec<InferRecord>> {
    check_seeds(seeds)?;
    cfg.validate()?;
    let per_seed: Vec<Vec<InferRecord>> = seeds
        .par_iter()
        .map(|&seed| infer_seed(cfg, seed, streams))
        .collect::<Result<_>>()?;
    Ok(flatten(per_seed))
}

fn infer_seed(cfg: &InferConfig, seed: u64, streams: &StreamFactory) -> Result<Vec<InferRecord>> {
    let base = BetaBelief::new(cfg.prior_alpha, cfg.prior_beta)?;
    let mut rng = streams.stream(&["infer", "data"], seed);
    let mut data = Vec::with_capacity(cfg.steps);
    for t in 1..=cfg.steps {
        let theta = cfg.theta(t);
        let k = Binomial::new(cfg.trials, theta)
            .map_err(|e| Error::Numerical(format!("binomial({}, {theta}): {e}", cfg.trials)))?
            .sample(&mut rng);
        data.push((theta, BinomialStats::draw(k, cfg.trials)?));
    }

    let mut out = Vec::with_capacity(cfg.steps * cfg.methods.len());
    for (label, method) in &cfg.methods {
        let mut belief = base;
        let mut buffer = MemoryBuffer::new();
        let mut forgetting = ForgettingState::new(
            match method {
                InferMethod::Forgetting { alpha } => *alpha,
                _ => 1.0,
            },
            BinomialStats::ZERO,
        )?;
        let mut dist = match method {
            InferMethod::Bocd { hazard } => Some(RunLengthDistribution::new(*hazard, RunLengthDistribution::<BetaBelief>::DEFAULT_PRUNE)?),
            _ => None,
        };
        for (i, (theta, stats)) in data.iter().enumerate() {
            let mut rec = InferRecord {
                method: label.clone(),
                seed,
                t: i as u64 + 1,
                theta: *theta,
                mean: 0.0,
                log_variance: 0.0,
                mixture_mean: None,
                changepoint: None,
                selected: None,
            };
            match method {
                InferMethod::Recursive => belief = belief.posterior(stats)?,
                InferMethod::Bocd { .. } => {
                    let d = dist.as_ref().expect("bocd state");
                    let (next, outcome) = bocd_step(d, stats, &base)?;
                    dist = Some(next);
                    belief = outcome.point_belief;
                    rec.mixture_mean = Some(outcome.mixture_mean);
                    rec.changepoint = Some(outcome.changepoint);
                }
                InferMethod::Forgetting { .. } => {
                    let (next, b) = forgetting_step(&forgetting, stats, &base)?;
                    forgetting = next;
                    belief = b;
                }
                InferMethod::PowerPrior { alpha } => {
                    belief = power_prior_step(&buffer, stats, &base, *alpha)?;
                    buffer.push(*stats)?;
                }
                InferMethod::Bam { lambda, strategy, quantile_q } => {
                    let sel = SelectionConfig { lambda: *lambda, strategy: *strategy, quantile_q: *quantile_q, ..SelectionConfig::default() };
                    let step = bam_step(&base, &mut buffer, *stats, &sel)?;
                    belief = step.posterior;
                    rec.selected = Some(step.weights.len());
                }
            }
            rec.mean = belief.mean();
            rec.log_variance = belief.variance()?.ln();
            out.push(rec);
        }
    }
    Ok(out)
}

/// Regret curves for every (arm count, configuration, seed, agent).
pub fn run_bandit(cfg: &BanditConfig, seeds: &[u64], streams: &StreamFactory) -> Result<Vec<BanditRecord>> {
    check_seeds(seeds)?;
    cfg.validate()?;
    let cells: Vec<(usize, u64, u64)> = cfg
        .arms
        .iter()
        .flat_map(|&k| (0..cfg.configs as u64).flat_map(move |c| seeds.iter().map(move |&s| (k, c, s))))
        .collect();
    let per_cell: Vec<Vec<BanditRecord>> = cells
        .par_iter()
        .map(|&(k, c, seed)| {
            let ks = k.to_string();
            let cs = c.to_string();
            let env = BanditEnv::random(&mut streams.stream(&["bandit", "env", &ks], c), k, cfg.horizon, cfg.switch_rate, cfg.noise_sd)?;
            let mut out = Vec::with_capacity(cfg.horizon * cfg.agents.len());
            for &kind in &cfg.agents {
                let run = run_agent(
                    &env,
                    kind,
                    &cfg.params,
                    cfg.horizon,
                    &mut streams.stream(&["bandit", "reward", &ks, &cs], seed),
                    &mut streams.stream(&["bandit", "agent", kind.name(), &ks, &cs], seed),
                )?;
                out.extend(run.regret.iter().enumerate().map(|(t, &regret)| BanditRecord {
                    arms: k,
                    config_id: c,
                    seed,
                    t: t as u64 + 1,
                    agent: kind.name().to_string(),
                    regret,
                }));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(flatten(per_cell))
}

pub fn run_cartpole_episodic(cfg: &EpisodicConfig, seeds: &[u64], streams: &StreamFactory) -> Result<Vec<CartpoleRecord>> {
    check_seeds(seeds)?;
    cfg.validate()?;
    let per_seed: Vec<Vec<CartpoleRecord>> = seeds
        .par_iter()
        .map(|&s| episodic_experiment(cfg, s, &streams.child(&["cartpole-episodic"], s)))
        .collect::<Result<_>>()?;
    Ok(flatten(per_seed))
}

pub fn run_cartpole_continual(cfg: &ContinualConfig, seeds: &[u64], streams: &StreamFactory) -> Result<Vec<CartpoleRecord>> {
    check_seeds(seeds)?;
    cfg.validate()?;
    let per_seed: Vec<Vec<CartpoleRecord>> = seeds
        .par_iter()
        .map(|&s| continual_experiment(cfg, s, &streams.child(&["cartpole-continual"], s)))
        .collect::<Result<_>>()?;
    Ok(flatten(per_seed))
}

/// Loads `train-*` and `t10k-*` IDX files from `data_dir` and runs every seed.
pub fn run_mnist(cfg: &MnistConfig, data_dir: &Path, seeds: &[u64], streams: &StreamFactory) -> Result<Vec<MnistRecord>> {
    check_seeds(seeds)?;
    cfg.validate()?;
    let train = IdxDataset::load_split(data_dir, "train")?;
    let test = IdxDataset::load_split(data_dir, "t10k")?;
    let per_seed: Vec<Vec<MnistRecord>> = seeds
        .par_iter()
        .map(|&s| mnist_experiment(&train, &test, cfg, s, streams))
        .collect::<Result<_>>()?;
    Ok(flatten(per_seed))
}

/// Runs the configured experiment under `master_seed`.
pub fn run(cfg: &ExperimentConfig, master_seed: u64) -> Result<Records> {
    cfg.validate()?;
    let streams = StreamFactory::new(master_seed);
    Ok(match &cfg.settings {
        Settings::Infer(c) => Records::Infer(run_infer(c, &cfg.seeds, &streams)?),
        Settings::Bandit(c) => Records::Bandit(run_bandit(c, &cfg.seeds, &streams)?),
        Settings::CartpoleEpisodic(c) => Records::Cartpole(run_cartpole_episodic(c, &cfg.seeds, &streams)?),
        Settings::CartpoleContinual(c) => Records::Cartpole(run_cartpole_continual(c, &cfg.seeds, &streams)?),
        Settings::Mnist(c) => {
            let dir = cfg.data_dir.as_deref().ok_or_else(|| config("data_dir", "mnist needs a data directory"))?;
            Records::Mnist(run_mnist(c, dir, &cfg.seeds, &streams)?)
        }
    })
}

/// Writes `records.csv`, `records_summary.json` and the resolved
/// `config.toml` into `out_dir`.
pub fn write_outputs(cfg: &ExperimentConfig, records: Records, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let name = cfg.experiment.name();
    let mut paths = match records {
        Records::Infer(mut r) => emit(name, &mut r, &INFER_HEADER, out_dir, "records")?,
        Records::Bandit(mut r) => emit(name, &mut r, &BANDIT_HEADER, out_dir, "records")?,
        Records::Cartpole(mut r) => emit(name, &mut r, &CARTPOLE_HEADER, out_dir, "records")?,
        Records::Mnist(mut r) => emit(name, &mut r, &MNIST_HEADER, out_dir, "records")?,
    };
    let cfg_path = out_dir.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml_string()?)?;
    paths.push(cfg_path);
    Ok(paths)
}
