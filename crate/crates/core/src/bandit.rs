//! Switching-arm Gaussian bandit, five agents, and pseudo-regret.

use rand::Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};

use crate::baselines::{bocd_step, forgetting_step, ForgettingState, RunLengthDistribution};
use crate::conjugate::{Conjugate, GaussianBelief, GaussianStats};
use crate::error::{invalid, Result};
use crate::memory::{bam_step_with, select_bottom_up_gaussian, MemoryBuffer};

/// An arm whose mean alternates between two values at fixed switch times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmProcess {
    pub high_value: f64,
    pub low_value: f64,
    /// Steps at which the mean flips, strictly increasing.
    pub switch_times: Vec<usize>,
    /// Whether the arm starts on its high value.
    pub starts_high: bool,
    pub noise_sd: f64,
}

impl ArmProcess {
    pub fn mean_at(&self, t: usize) -> f64 {
        let flips = self.switch_times.partition_point(|&s| s <= t);
        if self.starts_high ^ (flips % 2 == 1) {
            self.high_value
        } else {
            self.low_value
        }
    }

    /// Draws a random arm: values from U[0, 1] at least `min_gap` apart and
    /// geometric inter-switch times with the given per-step rate.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        horizon: usize,
        switch_rate: f64,
        min_gap: f64,
        noise_sd: f64,
    ) -> Result<Self> {
        if !(switch_rate > 0.0 && switch_rate < 1.0) {
            return Err(invalid("switch_rate", format!("{switch_rate} is outside (0, 1)")));
        }
        if !(0.0..1.0).contains(&min_gap) {
            return Err(invalid("min_gap", format!("{min_gap} is outside [0, 1)")));
        }
        let (a, b) = loop {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            if (a - b).abs() >= min_gap {
                break (a, b);
            }
        };
        let gaps = Geometric::new(switch_rate).map_err(|e| invalid("switch_rate", e.to_string()))?;
        let mut switch_times = Vec::new();
        let mut t = 0usize;
        loop {
            t = t.saturating_add(gaps.sample(rng) as usize + 1);
            if t >= horizon {
                break;
            }
            switch_times.push(t);
        }
        Ok(Self {
            high_value: a.max(b),
            low_value: a.min(b),
            switch_times,
            starts_high: rng.random_bool(0.5),
            noise_sd,
        })
    }

    pub fn stationary(mean: f64, noise_sd: f64) -> Self {
        Self {
            high_value: mean,
            low_value: mean,
            switch_times: Vec::new(),
            starts_high: true,
            noise_sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditEnv {
    pub arms: Vec<ArmProcess>,
}

impl BanditEnv {
    pub fn new(arms: Vec<ArmProcess>) -> Result<Self> {
        if arms.len() < 2 {
            return Err(invalid("arms", format!("need at least 2 arms, got {}", arms.len())));
        }
        Ok(Self { arms })
    }

    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        num_arms: usize,
        horizon: usize,
        switch_rate: f64,
        noise_sd: f64,
    ) -> Result<Self> {
        let arms = (0..num_arms)
            .map(|_| ArmProcess::random(rng, horizon, switch_rate, 0.2, noise_sd))
            .collect::<Result<Vec<_>>>()?;
        Self::new(arms)
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn best_mean(&self, t: usize) -> f64 {
        self.arms
            .iter()
            .map(|a| a.mean_at(t))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Noisy reward of pulling `arm` at step `t`.
    pub fn pull<R: Rng + ?Sized>(&self, arm: usize, t: usize, rng: &mut R) -> Result<f64> {
        let process = self
            .arms
            .get(arm)
            .ok_or_else(|| invalid("arm", format!("{arm} out of range for {} arms", self.arms.len())))?;
        let mean = process.mean_at(t);
        if process.noise_sd == 0.0 {
            return Ok(mean);
        }
        let noise = Normal::new(0.0, process.noise_sd).map_err(|e| invalid("noise_sd", e.to_string()))?;
        Ok(mean + noise.sample(rng))
    }
}

/// Running pseudo-regret against the noiseless best arm.
pub fn cumulative_regret(chosen: &[usize], env: &BanditEnv) -> Vec<f64> {
    let mut total = 0.0;
    chosen
        .iter()
        .enumerate()
        .map(|(t, &arm)| {
            total += env.best_mean(t) - env.arms[arm].mean_at(t);
            total
        })
        .collect()
}

/// Confidence level `f(t) = 1 + t ln^2 t`.
pub fn ucb_confidence(t: f64) -> f64 {
    let l = t.ln();
    1.0 + t * l * l
}

/// Index policy with bonus `sqrt(2 ln f(t) / n_i)`; unpulled arms first,
/// ties to the lowest index. `t` counts pulls so far, starting at 1.
pub fn ucb_select(counts: &[u64], means: &[f64], t: u64) -> usize {
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return i;
    }
    let log_f = ucb_confidence(t as f64).ln();
    argmax(
        counts
            .iter()
            .zip(means)
            .map(|(&n, &m)| m + (2.0 * log_f / n as f64).sqrt()),
    )
}

/// Samples each belief and returns the argmax, ties to the lowest index.
pub fn thompson_select<R: Rng + ?Sized>(beliefs: &[GaussianBelief], rng: &mut R) -> Result<usize> {
    let mut draws = Vec::with_capacity(beliefs.len());
    for b in beliefs {
        draws.push(b.sample(rng)?);
    }
    Ok(argmax(draws.into_iter()))
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Thompson,
    ForgettingThompson,
    BocdThompson,
    Ucb,
    Ucbam,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::Thompson,
        AgentKind::ForgettingThompson,
        AgentKind::BocdThompson,
        AgentKind::Ucb,
        AgentKind::Ucbam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Thompson => "thompson",
            AgentKind::ForgettingThompson => "bf_thompson",
            AgentKind::BocdThompson => "bocd_thompson",
            AgentKind::Ucb => "ucb",
            AgentKind::Ucbam => "ucbam",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Hyperparameters shared by the agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentParams {
    pub prior_mean: f64,
    pub prior_variance: f64,
    /// Known observation variance used by the Gaussian beliefs.
    pub noise_variance: f64,
    pub forgetting_alpha: f64,
    pub bocd_hazard: f64,
    pub ucbam_lambda: f64,
    /// Test hook: keep UCBAM on its UCB branch forever.
    #[serde(skip)]
    pub ucbam_force_unknown: bool,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            prior_mean: 0.0,
            prior_variance: 0.05,
            noise_variance: 0.25 * 0.25,
            forgetting_alpha: 0.8,
            bocd_hazard: 0.016,
            ucbam_lambda: 0.0,
            ucbam_force_unknown: false,
        }
    }
}

impl AgentParams {
    pub fn base(&self) -> Result<GaussianBelief> {
        GaussianBelief::new(self.prior_mean, self.prior_variance, self.noise_variance)
    }
}

/// Per-arm UCBAM state.
#[derive(Debug, Clone)]
pub struct UcbamArmState {
    pub belief: GaussianBelief,
    pub memory: MemoryBuffer<GaussianStats>,
    /// Verdict from this arm's latest pull.
    pub known: bool,
    pub pull_count: u64,
}

/// Empirical pull counts and reward means.
#[derive(Debug, Clone)]
struct Empirical {
    counts: Vec<u64>,
    means: Vec<f64>,
}

impl Empirical {
    fn new(k: usize) -> Self {
        Self {
            counts: vec![0; k],
            means: vec![0.0; k],
        }
    }

    fn record(&mut self, arm: usize, v: f64) {
        self.counts[arm] += 1;
        self.means[arm] += (v - self.means[arm]) / self.counts[arm] as f64;
    }
}

enum AgentState {
    Thompson(Vec<GaussianBelief>),
    Forgetting(Vec<(ForgettingState<GaussianStats>, GaussianBelief)>),
    Bocd(Vec<RunLengthDistribution<GaussianBelief>>),
    Ucb,
    Ucbam { arms: Vec<UcbamArmState>, known: bool },
}

/// A bandit agent driven by [`Agent::select`] and [`Agent::observe`].
pub struct Agent {
    kind: AgentKind,
    params: AgentParams,
    base: GaussianBelief,
    empirical: Empirical,
    state: AgentState,
    pulls: u64,
}

impl Agent {
    pub fn new(kind: AgentKind, num_arms: usize, params: AgentParams) -> Result<Self> {
        let base = params.base()?;
        let state = match kind {
            AgentKind::Thompson => AgentState::Thompson(vec![base; num_arms]),
            AgentKind::ForgettingThompson => {
                let f = ForgettingState::new(params.forgetting_alpha, GaussianStats::ZERO)?;
                AgentState::Forgetting(vec![(f, base); num_arms])
            }
            AgentKind::BocdThompson => {
                let d = RunLengthDistribution::new(
                    params.bocd_hazard,
                    RunLengthDistribution::<GaussianBelief>::DEFAULT_PRUNE,
                )?;
                AgentState::Bocd(vec![d; num_arms])
            }
            AgentKind::Ucb => AgentState::Ucb,
            AgentKind::Ucbam => AgentState::Ucbam {
                arms: (0..num_arms)
                    .map(|_| UcbamArmState {
                        belief: base,
                        memory: MemoryBuffer::new(),
                        known: false,
                        pull_count: 0,
                    })
                    .collect(),
                known: false,
            },
        };
        Ok(Self {
            kind,
            params,
            base,
            empirical: Empirical::new(num_arms),
            state,
            pulls: 0,
        })
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    /// Whether UCBAM currently trusts its beliefs; always false for others.
    pub fn known(&self) -> bool {
        matches!(self.state, AgentState::Ucbam { known: true, .. })
    }

    pub fn ucbam_arms(&self) -> Option<&[UcbamArmState]> {
        match &self.state {
            AgentState::Ucbam { arms, .. } => Some(arms),
            _ => None,
        }
    }

    pub fn select<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        let t = self.pulls + 1;
        match &self.state {
            AgentState::Thompson(beliefs) => thompson_select(beliefs, rng),
            AgentState::Forgetting(states) => {
                let beliefs: Vec<GaussianBelief> = states.iter().map(|s| s.1).collect();
                thompson_select(&beliefs, rng)
            }
            AgentState::Bocd(dists) => {
                let mut beliefs = Vec::with_capacity(dists.len());
                for d in dists {
                    beliefs.push(sample_run_belief(d, &self.base, rng));
                }
                thompson_select(&beliefs, rng)
            }
            AgentState::Ucb => Ok(ucb_select(&self.empirical.counts, &self.empirical.means, t)),
            AgentState::Ucbam { arms, known } => {
                if *known {
                    let beliefs: Vec<GaussianBelief> = arms.iter().map(|a| a.belief).collect();
                    thompson_select(&beliefs, rng)
                } else {
                    Ok(ucb_select(&self.empirical.counts, &self.empirical.means, t))
                }
            }
        }
    }

    pub fn observe(&mut self, arm: usize, v: f64) -> Result<()> {
        if arm >= self.empirical.counts.len() {
            return Err(invalid("arm", format!("{arm} out of range")));
        }
        self.pulls += 1;
        self.empirical.record(arm, v);
        let stats = GaussianStats::single(v);
        match &mut self.state {
            AgentState::Thompson(beliefs) => {
                beliefs[arm] = beliefs[arm].posterior(&stats)?;
            }
            AgentState::Forgetting(states) => {
                states[arm] = forgetting_step(&states[arm].0, &stats, &self.base)?;
            }
            AgentState::Bocd(dists) => {
                dists[arm] = bocd_step(&dists[arm], &stats, &self.base)?.0;
            }
            AgentState::Ucb => {}
            AgentState::Ucbam { arms, known } => {
                let state = &mut arms[arm];
                let verdict = self.base.predictive_log_pdf(v) < state.belief.predictive_log_pdf(v);
                state.known = verdict;
                *known = verdict && !self.params.ucbam_force_unknown;
                let lambda = self.params.ucbam_lambda;
                let out = bam_step_with(&self.base, &mut state.memory, stats, lambda, |b, m, t| {
                    select_bottom_up_gaussian(b, m, t, lambda)
                })?;
                state.belief = out.posterior;
                state.pull_count += 1;
            }
        }
        Ok(())
    }
}

/// Draws a run length from the run-length posterior and returns its belief.
fn sample_run_belief<R: Rng + ?Sized>(
    dist: &RunLengthDistribution<GaussianBelief>,
    base: &GaussianBelief,
    rng: &mut R,
) -> GaussianBelief {
    if dist.is_empty() {
        return *base;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = *base;
    for ((_, w), (_, b)) in dist.weights().zip(dist.beliefs()) {
        acc += w;
        last = *b;
        if u < acc {
            break;
        }
    }
    last
}

/// Arms chosen and pseudo-regret for one agent on one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditRun {
    pub chosen: Vec<usize>,
    pub regret: Vec<f64>,
}

/// Runs one agent for `horizon` steps. Reward noise and agent randomness come
/// from separate streams so agents face identical reward noise.
pub fn run_agent<R1: Rng, R2: Rng>(
    env: &BanditEnv,
    kind: AgentKind,
    params: &AgentParams,
    horizon: usize,
    reward_rng: &mut R1,
    agent_rng: &mut R2,
) -> Result<BanditRun> {
    let mut agent = Agent::new(kind, env.num_arms(), params.clone())?;
    let mut chosen = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let arm = agent.select(agent_rng)?;
        let v = env.pull(arm, t, reward_rng)?;
        agent.observe(arm, v)?;
        chosen.push(arm);
    }
    let regret = cumulative_regret(&chosen, env);
    Ok(BanditRun { chosen, regret })
}
