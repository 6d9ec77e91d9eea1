use serde::{Deserialize, Serialize};

use super::cartpole::CartpoleParams;
use super::mppi::MppiConfig;
use super::rff::{RffMap, INPUT_DIM};
use super::trial::{run_trial, TrialPolicy};
use crate::baselines::{bocd_step, RunLengthDistribution};
use crate::conjugate::{Conjugate, RegressionBelief, RegressionStats};
use crate::error::{invalid, Result};
use crate::memory::{bam_step, bam_step_with_weights, MemoryBuffer, ReadoutWeights, SelectionConfig};
use crate::rng::StreamFactory;

/// Learned-dynamics model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub num_features: usize,
    pub bandwidth: f64,
    pub prior_precision: f64,
    pub noise_variance: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_features: 200,
            bandwidth: 6.0,
            prior_precision: 1e-4,
            noise_variance: 1e-6,
        }
    }
}

impl ModelConfig {
    pub fn base(&self) -> Result<RegressionBelief> {
        RegressionBelief::isotropic(4, self.num_features, self.prior_precision, self.noise_variance)
    }

    pub fn rff(&self, streams: &StreamFactory) -> Result<RffMap> {
        RffMap::new(&mut streams.stream(&["rff"], 0), INPUT_DIM, self.num_features, self.bandwidth)
    }
}

/// One trial of one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartpoleRecord {
    pub experiment: String,
    pub seed: u64,
    /// Episode (episodic) or gravity segment (continual), from 1.
    pub episode: usize,
    /// Trial within the episode (episodic) or overall (continual), from 1.
    pub trial: usize,
    pub method: String,
    pub score: f64,
    /// Cumulative weight optimisations so far.
    pub optimizations: usize,
    /// Whether BOCD flagged a changepoint on this trial's data.
    pub changepoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodicConfig {
    pub gravities: Vec<f64>,
    pub trials_per_episode: usize,
    pub trial_length: usize,
    pub lambda: f64,
    pub model: ModelConfig,
    pub mppi: MppiConfig,
    pub physics: CartpoleParams,
    /// Also run MPPI with the true dynamics as a reference.
    pub ground_truth: bool,
    /// Force the empty readout at every selection (reduction check).
    pub force_empty_weights: bool,
}

impl Default for EpisodicConfig {
    fn default() -> Self {
        use super::cartpole::{EARTH, MARS, NEPTUNE};
        Self {
            gravities: vec![EARTH, NEPTUNE, MARS, NEPTUNE, MARS, EARTH],
            trials_per_episode: 15,
            trial_length: 200,
            lambda: 0.0,
            model: ModelConfig::default(),
            mppi: MppiConfig::default(),
            physics: CartpoleParams::default(),
            ground_truth: false,
            force_empty_weights: false,
        }
    }
}

fn check_gravities(gravities: &[f64]) -> Result<()> {
    if gravities.is_empty() {
        return Err(invalid("gravities", "list is empty"));
    }
    if let Some(g) = gravities.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(invalid("gravities", format!("{g} must be positive and finite")));
    }
    Ok(())
}

impl EpisodicConfig {
    pub fn validate(&self) -> Result<()> {
        check_gravities(&self.gravities)?;
        if self.trials_per_episode == 0 {
            return Err(invalid("trials_per_episode", "must be positive"));
        }
        if self.trial_length == 0 {
            return Err(invalid("trial_length", "must be positive"));
        }
        if !(self.lambda >= 0.0) {
            return Err(invalid("lambda", "must be >= 0"));
        }
        self.mppi.validate()?;
        self.physics.validate()
    }
}

struct Recorder<'a> {
    experiment: &'a str,
    seed: u64,
    out: Vec<CartpoleRecord>,
}

impl Recorder<'_> {
    fn push(&mut self, episode: usize, trial: usize, method: &str, score: f64, optimizations: usize, changepoint: bool) {
        self.out.push(CartpoleRecord {
            experiment: self.experiment.to_string(),
            seed: self.seed,
            episode,
            trial,
            method: method.to_string(),
            score,
            optimizations,
            changepoint,
        });
    }
}

/// Episodic one-shot adaptation: recursive Bayes restarts from the base prior
/// each episode; BAM selects a readout over all stored trials once, after the
/// first trial of each episode, then updates recursively.
///
/// Trials with the same (episode, trial) index share a random stream across
/// methods, so methods holding identical beliefs produce identical trials.
pub fn episodic_experiment(cfg: &EpisodicConfig, seed: u64, streams: &StreamFactory) -> Result<Vec<CartpoleRecord>> {
    cfg.validate()?;
    let rff = cfg.model.rff(streams)?;
    let base = cfg.model.base()?;
    let mut rec = Recorder {
        experiment: "cartpole-episodic",
        seed,
        out: Vec::new(),
    };
    let mut buffer: MemoryBuffer<RegressionStats> = MemoryBuffer::new();
    let mut bam_opts = 0;
    let select = SelectionConfig::bottom_up(cfg.lambda);

    for (e, &g) in cfg.gravities.iter().enumerate() {
        let env = cfg.physics.with_gravity(g);
        let episode = e + 1;
        let trial_rng = |trial: usize| streams.stream(&["trial", &episode.to_string()], trial as u64);

        // trial 1 runs from the base prior for both learners
        let first = run_trial(TrialPolicy::Belief(&base), &rff, &env, &cfg.mppi, cfg.trial_length, &mut trial_rng(1))?;
        let stats = first.batch.stats(&rff)?;
        let mut recursive = base.posterior(&stats)?;
        let step = if cfg.force_empty_weights {
            let n = buffer.len();
            bam_step_with_weights(&base, &mut buffer, stats, ReadoutWeights::empty(n), cfg.lambda)?
        } else {
            bam_step(&base, &mut buffer, stats, &select)?
        };
        bam_opts += 1;
        let mut bam = step.posterior;
        rec.push(episode, 1, "recursive", first.score, 0, false);
        rec.push(episode, 1, "bam", first.score, bam_opts, false);

        for trial in 2..=cfg.trials_per_episode {
            let r = run_trial(TrialPolicy::Belief(&recursive), &rff, &env, &cfg.mppi, cfg.trial_length, &mut trial_rng(trial))?;
            recursive = recursive.posterior(&r.batch.stats(&rff)?)?;
            rec.push(episode, trial, "recursive", r.score, 0, false);

            let b = run_trial(TrialPolicy::Belief(&bam), &rff, &env, &cfg.mppi, cfg.trial_length, &mut trial_rng(trial))?;
            let stats = b.batch.stats(&rff)?;
            bam = bam.posterior(&stats)?;
            buffer.push(stats)?;
            rec.push(episode, trial, "bam", b.score, bam_opts, false);
        }

        if cfg.ground_truth {
            for trial in 1..=cfg.trials_per_episode {
                let t = run_trial(TrialPolicy::Exact(env), &rff, &env, &cfg.mppi, cfg.trial_length, &mut trial_rng(trial))?;
                rec.push(episode, trial, "ground_truth", t.score, 0, false);
            }
        }
    }
    Ok(rec.out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinualLearner {
    /// Run-length posterior; plans with the belief at the MAP run length.
    Bocd,
    /// Weight selection on every trial.
    Bam,
    /// Weight selection only when BOCD flags a changepoint.
    BamBocd,
}

impl ContinualLearner {
    pub const ALL: [ContinualLearner; 3] = [ContinualLearner::Bocd, ContinualLearner::Bam, ContinualLearner::BamBocd];

    pub fn name(self) -> &'static str {
        match self {
            ContinualLearner::Bocd => "bocd",
            ContinualLearner::Bam => "bam",
            ContinualLearner::BamBocd => "bam_bocd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinualConfig {
    /// (gravity, number of trials) segments, visited in order.
    pub segments: Vec<(f64, usize)>,
    pub trial_length: usize,
    pub hazard: f64,
    pub lambda: f64,
    pub learners: Vec<ContinualLearner>,
    pub model: ModelConfig,
    pub mppi: MppiConfig,
    pub physics: CartpoleParams,
}

impl Default for ContinualConfig {
    fn default() -> Self {
        use super::cartpole::{EARTH, MARS};
        Self {
            segments: vec![(EARTH, 15), (MARS, 15), (EARTH, 15), (MARS, 15)],
            trial_length: 200,
            hazard: 0.11,
            lambda: 0.0,
            learners: ContinualLearner::ALL.to_vec(),
            model: ModelConfig::default(),
            mppi: MppiConfig::default(),
            physics: CartpoleParams::default(),
        }
    }
}

impl ContinualConfig {
    pub fn validate(&self) -> Result<()> {
        let gravities: Vec<f64> = self.segments.iter().map(|s| s.0).collect();
        check_gravities(&gravities)?;
        if self.segments.iter().any(|s| s.1 == 0) {
            return Err(invalid("segments", "every segment needs at least one trial"));
        }
        if self.trial_length == 0 {
            return Err(invalid("trial_length", "must be positive"));
        }
        if !(self.hazard > 0.0 && self.hazard <= 1.0) {
            return Err(invalid("hazard", format!("{} is outside (0, 1]", self.hazard)));
        }
        if !(self.lambda >= 0.0) {
            return Err(invalid("lambda", "must be >= 0"));
        }
        self.mppi.validate()?;
        self.physics.validate()
    }

    /// (segment index from 1, gravity) for each trial.
    pub fn schedule(&self) -> Vec<(usize, f64)> {
        self.segments
            .iter()
            .enumerate()
            .flat_map(|(i, &(g, n))| std::iter::repeat_n((i + 1, g), n))
            .collect()
    }
}

/// Continual adaptation without episode boundaries. All learners face the
/// same gravity schedule and per-trial random streams.
pub fn continual_experiment(cfg: &ContinualConfig, seed: u64, streams: &StreamFactory) -> Result<Vec<CartpoleRecord>> {
    cfg.validate()?;
    let rff = cfg.model.rff(streams)?;
    let base = cfg.model.base()?;
    let schedule = cfg.schedule();
    let select = SelectionConfig::bottom_up(cfg.lambda);
    let mut rec = Recorder {
        experiment: "cartpole-continual",
        seed,
        out: Vec::new(),
    };

    for &learner in &cfg.learners {
        let mut belief = base.clone();
        let mut buffer: MemoryBuffer<RegressionStats> = MemoryBuffer::new();
        let mut dist = RunLengthDistribution::<RegressionBelief>::new(cfg.hazard, RunLengthDistribution::<RegressionBelief>::DEFAULT_PRUNE)?;
        let mut opts = 0;

        for (i, &(segment, g)) in schedule.iter().enumerate() {
            let env = cfg.physics.with_gravity(g);
            let outcome = run_trial(
                TrialPolicy::Belief(&belief),
                &rff,
                &env,
                &cfg.mppi,
                cfg.trial_length,
                &mut streams.stream(&["trial"], i as u64 + 1),
            )?;
            let stats = outcome.batch.stats(&rff)?;
            let mut changepoint = false;
            match learner {
                ContinualLearner::Bocd => {
                    let (next, out) = bocd_step(&dist, &stats, &base)?;
                    dist = next;
                    changepoint = out.changepoint;
                    belief = out.point_belief;
                }
                ContinualLearner::Bam => {
                    belief = bam_step(&base, &mut buffer, stats, &select)?.posterior;
                    opts += 1;
                }
                ContinualLearner::BamBocd => {
                    let (next, out) = bocd_step(&dist, &stats, &base)?;
                    dist = next;
                    changepoint = out.changepoint;
                    if changepoint {
                        belief = bam_step(&base, &mut buffer, stats, &select)?.posterior;
                        opts += 1;
                    } else {
                        belief = belief.posterior(&stats)?;
                        buffer.push(stats)?;
                    }
                }
            }
            rec.push(segment, i + 1, learner.name(), outcome.score, opts, changepoint);
        }
    }
    Ok(rec.out)
}
