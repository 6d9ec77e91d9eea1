use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{BatchId, MemoryBuffer, ReadoutWeights, SelectionConfig, Strategy};
use crate::conjugate::{Conjugate, SuffStats};
use crate::error::{Error, Result};
use crate::stats::quantile;

/// Absolute slack a candidate must beat the incumbent score by.
const IMPROVEMENT_SLACK: f64 = 1e-12;

/// Result of a weight search.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub weights: ReadoutWeights,
    pub score: f64,
    /// Number of distinct score evaluations performed.
    pub candidates_evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDiagnostics {
    pub selected: Vec<u64>,
    pub score: f64,
    pub lambda: f64,
    pub candidates_evaluated: usize,
    pub buffer_len: usize,
}

#[derive(Debug, Clone)]
pub struct StepOutcome<B> {
    pub weights: ReadoutWeights,
    pub prior: B,
    pub posterior: B,
    pub diagnostics: SelectionDiagnostics,
}

/// Prior formed by conditioning `base` on the selected batches.
pub fn bam_prior<B: Conjugate>(
    base: &B,
    buffer: &MemoryBuffer<B::Stats>,
    weights: &ReadoutWeights,
) -> Result<B> {
    if weights.buffer_len() != buffer.len() {
        return Err(Error::DimensionMismatch {
            what: "readout weights",
            expected: buffer.len(),
            actual: weights.buffer_len(),
        });
    }
    let mut ids = weights.selected().iter();
    let Some(&first) = ids.next() else {
        return Ok(base.clone());
    };
    let mut merged = buffer.get(first)?.clone();
    for &id in ids {
        merged = merged.merge(buffer.get(id)?)?;
    }
    base.posterior(&merged)
}

pub(crate) fn score_of<B: Conjugate>(
    base: &B,
    prior: &B,
    target: &B::Stats,
    lambda: f64,
) -> Result<f64> {
    let lm = prior.log_marginal(target)?;
    let score = if lambda == 0.0 {
        lm
    } else {
        let kl = prior.kl_to(base)?.max(0.0);
        lm - lambda * (2.0 * kl).sqrt()
    };
    if score.is_nan() {
        return Err(Error::Numerical("weight score is NaN".into()));
    }
    Ok(score)
}

pub fn weight_score<B: Conjugate>(
    base: &B,
    buffer: &MemoryBuffer<B::Stats>,
    weights: &ReadoutWeights,
    target: &B::Stats,
    lambda: f64,
) -> Result<f64> {
    let prior = bam_prior(base, buffer, weights)?;
    score_of(base, &prior, target, lambda)
}

/// Buckets buffer positions whose statistics are bitwise identical; each
/// bucket lists positions in ascending order.
fn group_entries<S: SuffStats>(stats: &[S]) -> Vec<VecDeque<usize>> {
    let mut groups: Vec<VecDeque<usize>> = Vec::new();
    let mut by_key: HashMap<[u64; 3], usize> = HashMap::new();
    for (i, s) in stats.iter().enumerate() {
        match s.dedup_key() {
            Some(key) => {
                let g = *by_key.entry(key).or_insert_with(|| {
                    groups.push(VecDeque::new());
                    groups.len() - 1
                });
                groups[g].push_back(i);
            }
            None => groups.push(VecDeque::from([i])),
        }
    }
    groups
}

/// Greedy forward selection: starting from the empty readout, repeatedly add
/// the unselected batch with the best score while it strictly improves on the
/// incumbent. Ties go to the lowest batch id.
pub fn select_bottom_up<B: Conjugate>(
    base: &B,
    buffer: &MemoryBuffer<B::Stats>,
    target: &B::Stats,
    cfg: &SelectionConfig,
) -> Result<Selection> {
    cfg.validate()?;
    let stats = buffer.stats();
    let mut weights = ReadoutWeights::empty(buffer.len());
    let mut incumbent = base.clone();
    let mut incumbent_score = score_of(base, base, target, cfg.lambda)?;
    let mut evaluated = 1;
    let mut groups = group_entries(stats);

    loop {
        let mut best: Option<(f64, usize, usize, B)> = None;
        for (g, members) in groups.iter().enumerate() {
            let Some(&idx) = members.front() else {
                continue;
            };
            let candidate = incumbent.posterior(&stats[idx])?;
            let s = score_of(base, &candidate, target, cfg.lambda)?;
            evaluated += 1;
            let better = match &best {
                None => true,
                Some((bs, _, bidx, _)) => s > *bs || (s == *bs && idx < *bidx),
            };
            if better {
                best = Some((s, g, idx, candidate));
            }
        }
        match best {
            Some((s, g, idx, candidate)) if s > incumbent_score + IMPROVEMENT_SLACK => {
                groups[g].pop_front();
                weights.insert(BatchId(idx as u64));
                incumbent = candidate;
                incumbent_score = s;
            }
            _ => break,
        }
    }

    Ok(Selection {
        weights,
        score: incumbent_score,
        candidates_evaluated: evaluated,
    })
}

/// Scores every batch on its own against the target, drops those that do not
/// beat the base prior, and keeps the survivors at or above the
/// `quantile_q`-quantile of surviving scores.
pub fn select_parallel<B: Conjugate>(
    base: &B,
    buffer: &MemoryBuffer<B::Stats>,
    target: &B::Stats,
    cfg: &SelectionConfig,
) -> Result<Selection> {
    cfg.validate()?;
    let stats = buffer.stats();
    let base_score = score_of(base, base, target, cfg.lambda)?;
    let mut evaluated = 1;

    let mut scores = vec![f64::NEG_INFINITY; stats.len()];
    for members in group_entries(stats) {
        let first = members[0];
        let s = score_of(base, &base.posterior(&stats[first])?, target, cfg.lambda)?;
        evaluated += 1;
        for i in members {
            scores[i] = s;
        }
    }

    let survivors: Vec<f64> = scores.iter().copied().filter(|&s| s > base_score).collect();
    let Some(cutoff) = quantile(&survivors, cfg.quantile_q) else {
        return Ok(Selection {
            weights: ReadoutWeights::empty(buffer.len()),
            score: base_score,
            candidates_evaluated: evaluated,
        });
    };
    let selected = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > base_score && s >= cutoff)
        .map(|(i, _)| BatchId(i as u64));
    let weights = ReadoutWeights::from_ids(buffer.len(), selected)?;
    let score = weight_score(base, buffer, &weights, target, cfg.lambda)?;
    Ok(Selection {
        weights,
        score,
        candidates_evaluated: evaluated + 1,
    })
}

/// Advances `idx` to the next k-combination of 0..n in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact argmax over all readouts. Subsets are visited by size, then
/// lexicographically, and only strict improvements replace the incumbent, so
/// ties resolve toward smaller and then lexicographically earlier subsets.
pub fn select_exhaustive<B: Conjugate>(
    base: &B,
    buffer: &MemoryBuffer<B::Stats>,
    target: &B::Stats,
    cfg: &SelectionConfig,
) -> Result<Selection> {
    cfg.validate()?;
    let n = buffer.len();
    if n > cfg.max_exhaustive {
        return Err(Error::ExhaustiveTooLarge {
            len: n,
            limit: cfg.max_exhaustive,
        });
    }
    let stats = buffer.stats();
    let mut best_score = score_of(base, base, target, cfg.lambda)?;
    let mut best_ids: Vec<usize> = Vec::new();
    let mut evaluated = 1;

    for k in 1..=n {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let mut merged = stats[idx[0]].clone();
            for &i in &idx[1..] {
                merged = merged.merge(&stats[i])?;
            }
            let prior = base.posterior(&merged)?;
            let s = score_of(base, &prior, target, cfg.lambda)?;
            evaluated += 1;
            if s > best_score {
                best_score = s;
                best_ids.clone_from(&idx);
            }
            if !next_combination(&mut idx, n) {
                break;
            }
        }
    }

    Ok(Selection {
        weights: ReadoutWeights::from_ids(n, best_ids.into_iter().map(|i| BatchId(i as u64)))?,
        score: best_score,
        candidates_evaluated: evaluated,
    })
}

pub fn select<B: Conjugate>(
    base: &B,
    buffer: &MemoryBuffer<B::Stats>,
    target: &B::Stats,
    cfg: &SelectionConfig,
) -> Result<Selection> {
    match cfg.strategy {
        Strategy::BottomUp => select_bottom_up(base, buffer, target, cfg),
        Strategy::Parallel => select_parallel(base, buffer, target, cfg),
        Strategy::Exhaustive => select_exhaustive(base, buffer, target, cfg),
    }
}

/// One BAM update: choose a readout for `target`, condition on it, then
/// append `target` to the buffer.
pub fn bam_step<B: Conjugate>(
    base: &B,
    buffer: &mut MemoryBuffer<B::Stats>,
    target: B::Stats,
    cfg: &SelectionConfig,
) -> Result<StepOutcome<B>> {
    bam_step_with(base, buffer, target, cfg.lambda, |b, m, t| select(b, m, t, cfg))
}

/// [`bam_step`] with a caller-supplied selection routine.
pub fn bam_step_with<B, F>(
    base: &B,
    buffer: &mut MemoryBuffer<B::Stats>,
    target: B::Stats,
    lambda: f64,
    selector: F,
) -> Result<StepOutcome<B>>
where
    B: Conjugate,
    F: FnOnce(&B, &MemoryBuffer<B::Stats>, &B::Stats) -> Result<Selection>,
{
    let selection = selector(base, buffer, &target)?;
    finish_step(base, buffer, target, lambda, selection)
}

/// A BAM update with the readout fixed in advance.
pub fn bam_step_with_weights<B: Conjugate>(
    base: &B,
    buffer: &mut MemoryBuffer<B::Stats>,
    target: B::Stats,
    weights: ReadoutWeights,
    lambda: f64,
) -> Result<StepOutcome<B>> {
    let score = weight_score(base, buffer, &weights, &target, lambda)?;
    let selection = Selection {
        weights,
        score,
        candidates_evaluated: 1,
    };
    finish_step(base, buffer, target, lambda, selection)
}

fn finish_step<B: Conjugate>(
    base: &B,
    buffer: &mut MemoryBuffer<B::Stats>,
    target: B::Stats,
    lambda: f64,
    selection: Selection,
) -> Result<StepOutcome<B>> {
    let prior = bam_prior(base, buffer, &selection.weights)?;
    let posterior = prior.posterior(&target)?;
    let diagnostics = SelectionDiagnostics {
        selected: selection.weights.ids(),
        score: selection.score,
        lambda,
        candidates_evaluated: selection.candidates_evaluated,
        buffer_len: buffer.len(),
    };
    buffer.push(target)?;
    Ok(StepOutcome {
        weights: selection.weights,
        prior,
        posterior,
        diagnostics,
    })
}
