//! Fixed-readout learners and Bayesian online changepoint detection.

use crate::conjugate::{Conjugate, SuffStats};
use crate::error::{invalid, Error, Result};
use crate::memory::{bam_prior, BatchId, MemoryBuffer, ReadoutWeights};

/// Plain conjugate update.
pub fn recursive_step<B: Conjugate>(state: &B, batch: &B::Stats) -> Result<B> {
    state.posterior(batch)
}

/// Exponentially decayed running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ForgettingState<S> {
    decayed: S,
    alpha: f64,
}

impl<S: SuffStats> ForgettingState<S> {
    pub fn new(alpha: f64, zero: S) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid("alpha", format!("{alpha} is outside [0, 1]")));
        }
        Ok(Self {
            decayed: zero.zero_like(),
            alpha,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn decayed_stats(&self) -> &S {
        &self.decayed
    }
}

/// Decays the running statistics by `alpha`, adds `batch`, and conditions the
/// base prior on the result.
pub fn forgetting_step<B: Conjugate>(
    state: &ForgettingState<B::Stats>,
    batch: &B::Stats,
    base: &B,
) -> Result<(ForgettingState<B::Stats>, B)> {
    let decayed = state.decayed.scale(state.alpha)?.merge(batch)?;
    let belief = base.posterior(&decayed)?;
    Ok((
        ForgettingState {
            decayed,
            alpha: state.alpha,
        },
        belief,
    ))
}

/// Conditions the base prior on every past batch tempered by `alpha` plus the
/// current batch at full weight.
pub fn power_prior_step<B: Conjugate>(
    buffer: &MemoryBuffer<B::Stats>,
    batch: &B::Stats,
    base: &B,
    alpha: f64,
) -> Result<B> {
    let mut merged = batch.clone();
    for (_, s) in buffer.iter() {
        merged = merged.merge(&s.scale(alpha)?)?;
    }
    base.posterior(&merged)
}

/// Posterior over the buffer with the `forget` batches removed.
pub fn unlearn<B: Conjugate>(
    buffer: &MemoryBuffer<B::Stats>,
    forget: &[BatchId],
    base: &B,
) -> Result<B> {
    for id in forget {
        buffer.get(*id)?;
    }
    let kept = buffer.ids().filter(|id| !forget.contains(id));
    let weights = ReadoutWeights::from_ids(buffer.len(), kept)?;
    bam_prior(base, buffer, &weights)
}

/// Posterior over the length of the current stationary run, with one belief
/// per surviving run length.
///
/// Run length `r` means the current segment holds the latest `r + 1` batches;
/// a changepoint starts a fresh segment at the batch that triggered it.
#[derive(Debug, Clone)]
pub struct RunLengthDistribution<B> {
    /// (run length, probability, belief), in increasing run length.
    entries: Vec<(usize, f64, B)>,
    hazard: f64,
    prune_threshold: f64,
}

#[derive(Debug, Clone)]
pub struct BocdOutcome<B> {
    pub changepoint: bool,
    pub map_run_length: usize,
    /// Belief at the most probable run length.
    pub point_belief: B,
    /// Run-length-weighted average of the per-run belief summaries.
    pub mixture_mean: f64,
}

impl<B: Conjugate> RunLengthDistribution<B> {
    pub const DEFAULT_PRUNE: f64 = 1e-8;

    pub fn new(hazard: f64, prune_threshold: f64) -> Result<Self> {
        if !(hazard > 0.0 && hazard <= 1.0) {
            return Err(invalid("hazard", format!("{hazard} is outside (0, 1]")));
        }
        if !(0.0..1.0).contains(&prune_threshold) {
            return Err(invalid(
                "prune_threshold",
                format!("{prune_threshold} is outside [0, 1)"),
            ));
        }
        Ok(Self {
            entries: Vec::new(),
            hazard,
            prune_threshold,
        })
    }

    pub fn hazard(&self) -> f64 {
        self.hazard
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// (run length, probability) pairs.
    pub fn weights(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().map(|(r, w, _)| (*r, *w))
    }

    pub fn beliefs(&self) -> impl Iterator<Item = (usize, &B)> + '_ {
        self.entries.iter().map(|(r, _, b)| (*r, b))
    }

    /// Most probable run length; ties go to the shorter run.
    pub fn map_run_length(&self) -> Option<usize> {
        self.map_entry().map(|e| e.0)
    }

    fn map_entry(&self) -> Option<&(usize, f64, B)> {
        self.entries
            .iter()
            .fold(None, |best: Option<&(usize, f64, B)>, e| match best {
                Some(b) if b.1 >= e.1 => Some(b),
                _ => Some(e),
            })
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// One constant-hazard run-length update.
///
/// Each run grows with mass `(1 - H) w_r p_r(x)`; a changepoint opens a new
/// run with mass `H p_base(x)` whose belief is the base conditioned on `x`.
/// The flag is raised when the MAP run length falls by more than one.
pub fn bocd_step<B: Conjugate>(
    dist: &RunLengthDistribution<B>,
    batch: &B::Stats,
    base: &B,
) -> Result<(RunLengthDistribution<B>, BocdOutcome<B>)> {
    let prev_map = dist.map_run_length();
    let log_growth = (1.0 - dist.hazard).ln();

    let mut candidates: Vec<(usize, f64, B)> = Vec::with_capacity(dist.entries.len() + 1);
    let cp_log = if dist.entries.is_empty() {
        0.0
    } else {
        dist.hazard.ln() + base.log_marginal(batch)?
    };
    candidates.push((0, cp_log, base.posterior(batch)?));
    if log_growth.is_finite() {
        for (r, w, belief) in &dist.entries {
            let lw = w.ln() + log_growth + belief.log_marginal(batch)?;
            if lw > f64::NEG_INFINITY {
                candidates.push((r + 1, lw, belief.posterior(batch)?));
            }
        }
    }

    let logs: Vec<f64> = candidates.iter().map(|c| c.1).collect();
    let norm = log_sum_exp(&logs);
    if !norm.is_finite() {
        return Err(Error::Numerical(
            "every run-length predictive underflowed".into(),
        ));
    }
    let mut entries: Vec<(usize, f64, B)> = candidates
        .into_iter()
        .map(|(r, lw, b)| (r, (lw - norm).exp(), b))
        .filter(|(_, w, _)| *w >= dist.prune_threshold && *w > 0.0)
        .collect();
    let total: f64 = entries.iter().map(|e| e.1).sum();
    for e in &mut entries {
        e.1 /= total;
    }
    entries.sort_by_key(|e| e.0);

    let next = RunLengthDistribution {
        entries,
        hazard: dist.hazard,
        prune_threshold: dist.prune_threshold,
    };
    let map = next
        .map_entry()
        .ok_or_else(|| Error::Numerical("run-length distribution is empty".into()))?;
    let map_run_length = map.0;
    let point_belief = map.2.clone();
    let mixture_mean = next
        .entries
        .iter()
        .map(|(_, w, b)| w * b.mean_summary())
        .sum();
    let changepoint = prev_map.is_some_and(|p| map_run_length + 1 < p);
    Ok((
        next,
        BocdOutcome {
            changepoint,
            map_run_length,
            point_belief,
            mixture_mean,
        },
    ))
}
