//! Exact shortcut for greedy selection over single Gaussian observations.
//!
//! With `lambda = 0` and every stored entry holding one observation, every
//! candidate prior in a greedy round has the same variance, and the evidence
//! of the target depends on the candidate only through the squared distance
//! between its mean and the target mean. The best candidate is therefore the
//! stored value nearest to the value that would place the candidate mean on
//! the target mean, which a sorted index finds in logarithmic time.

use std::collections::BTreeSet;

use ordered_float::OrderedFloat;

use super::select::{score_of, select_bottom_up, Selection};
use super::{BatchId, MemoryBuffer, ReadoutWeights, SelectionConfig};
use crate::conjugate::{Conjugate, GaussianBelief, GaussianStats};
use crate::error::Result;

const IMPROVEMENT_SLACK: f64 = 1e-12;

type Key = (OrderedFloat<f64>, usize);

/// Same result as [`select_bottom_up`] with `lambda`, falling back to it when
/// the shortcut does not apply.
pub fn select_bottom_up_gaussian(
    base: &GaussianBelief,
    buffer: &MemoryBuffer<GaussianStats>,
    target: &GaussianStats,
    lambda: f64,
) -> Result<Selection> {
    let stats = buffer.stats();
    let applies = lambda == 0.0 && target.n > 0.0 && stats.iter().all(|s| s.n == 1.0);
    if !applies {
        return select_bottom_up(base, buffer, target, &SelectionConfig::bottom_up(lambda));
    }

    let target_mean = target.sum_y / target.n;
    let s2 = base.noise_variance();
    let mut index: BTreeSet<Key> = stats
        .iter()
        .enumerate()
        .map(|(i, s)| (OrderedFloat(s.sum_y), i))
        .collect();

    let mut weights = ReadoutWeights::empty(buffer.len());
    let mut incumbent = *base;
    let mut incumbent_score = score_of(base, base, target, 0.0)?;
    let mut evaluated = 1;

    while let Some(idx) = nearest(&index, ideal_value(&incumbent, s2, target_mean)?) {
        let candidate = incumbent.posterior(&stats[idx])?;
        let s = score_of(base, &candidate, target, 0.0)?;
        evaluated += 1;
        if s > incumbent_score + IMPROVEMENT_SLACK {
            index.remove(&(OrderedFloat(stats[idx].sum_y), idx));
            weights.insert(BatchId(idx as u64));
            incumbent = candidate;
            incumbent_score = s;
        } else {
            break;
        }
    }

    Ok(Selection {
        weights,
        score: incumbent_score,
        candidates_evaluated: evaluated,
    })
}

/// Observation value whose addition would move the incumbent mean exactly
/// onto `target_mean`.
fn ideal_value(incumbent: &GaussianBelief, s2: f64, target_mean: f64) -> Result<f64> {
    let tau = incumbent.variance()?;
    let tau_c = 1.0 / (1.0 / tau + 1.0 / s2);
    Ok(s2 * (target_mean / tau_c - incumbent.mean() / tau))
}

/// Position of the stored value closest to `y`; among equally close values the
/// lowest position wins.
fn nearest(index: &BTreeSet<Key>, y: f64) -> Option<usize> {
    let y = OrderedFloat(y);
    let below = index
        .range(..=(y, usize::MAX))
        .next_back()
        .and_then(|&(v, _)| lowest_with_value(index, v));
    let above = index.range((y, 0)..).next().copied();
    match (below, above) {
        (None, None) => None,
        (Some((_, i)), None) | (None, Some((_, i))) => Some(i),
        (Some((vb, ib)), Some((va, ia))) => {
            let db = y.0 - vb.0;
            let da = va.0 - y.0;
            if db < da || (db == da && ib < ia) {
                Some(ib)
            } else {
                Some(ia)
            }
        }
    }
}

fn lowest_with_value(index: &BTreeSet<Key>, v: OrderedFloat<f64>) -> Option<Key> {
    index.range((v, 0)..).next().copied()
}
