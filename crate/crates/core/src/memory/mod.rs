//! The memory buffer, readout weights and penalised weight selection.
//!
//! A readout `W` picks which stored batches are folded into the prior for the
//! next batch. The score of a readout is
//! `log p(target | W) - lambda * sqrt(2 * KL(prior_W || base))`.

mod fast;
mod select;

pub use fast::select_bottom_up_gaussian;
pub use select::{
    bam_prior, bam_step, bam_step_with, bam_step_with_weights, select, select_bottom_up,
    select_exhaustive, select_parallel, weight_score, Selection, SelectionDiagnostics, StepOutcome,
};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::conjugate::SuffStats;
use crate::error::{invalid, Error, Result};

/// Monotone identifier of a stored batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BatchId(pub u64);

impl fmt::Display for BatchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Append-only store of past batches as sufficient statistics.
///
/// Ids are assigned consecutively from zero, so the id of an entry is also
/// its position in the buffer.
#[derive(Debug, Clone)]
pub struct MemoryBuffer<S> {
    entries: Vec<S>,
    capacity: Option<usize>,
}

impl<S> Default for MemoryBuffer<S> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
            capacity: None,
        }
    }
}

impl<S: SuffStats> MemoryBuffer<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// A buffer that refuses (rather than evicts) pushes beyond `capacity`.
    pub fn with_capacity_limit(capacity: usize) -> Self {
        Self {
            entries: Vec::new(),
            capacity: Some(capacity),
        }
    }

    pub fn push(&mut self, stats: S) -> Result<BatchId> {
        if let Some(cap) = self.capacity {
            if self.entries.len() >= cap {
                return Err(Error::BufferFull { capacity: cap });
            }
        }
        if let Some(first) = self.entries.first() {
            if !first.same_shape(&stats) {
                return Err(invalid("stats", "shape differs from the buffer's entries"));
            }
        }
        self.entries.push(stats);
        Ok(BatchId(self.entries.len() as u64 - 1))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn get(&self, id: BatchId) -> Result<&S> {
        self.entries
            .get(id.0 as usize)
            .ok_or(Error::UnknownBatch(id.0))
    }

    pub fn ids(&self) -> impl Iterator<Item = BatchId> + '_ {
        (0..self.entries.len() as u64).map(BatchId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (BatchId, &S)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, s)| (BatchId(i as u64), s))
    }

    pub fn stats(&self) -> &[S] {
        &self.entries
    }
}

/// Binary readout over a buffer: the set of batch ids with weight one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadoutWeights {
    selected: BTreeSet<BatchId>,
    buffer_len: usize,
}

impl ReadoutWeights {
    pub fn empty(buffer_len: usize) -> Self {
        Self {
            selected: BTreeSet::new(),
            buffer_len,
        }
    }

    pub fn all(buffer_len: usize) -> Self {
        Self {
            selected: (0..buffer_len as u64).map(BatchId).collect(),
            buffer_len,
        }
    }

    pub fn from_ids(buffer_len: usize, ids: impl IntoIterator<Item = BatchId>) -> Result<Self> {
        let mut selected = BTreeSet::new();
        for id in ids {
            if id.0 as usize >= buffer_len {
                return Err(Error::UnknownBatch(id.0));
            }
            selected.insert(id);
        }
        Ok(Self {
            selected,
            buffer_len,
        })
    }

    pub fn from_dense(dense: &[bool]) -> Self {
        Self {
            selected: dense
                .iter()
                .enumerate()
                .filter(|(_, &w)| w)
                .map(|(i, _)| BatchId(i as u64))
                .collect(),
            buffer_len: dense.len(),
        }
    }

    pub fn to_dense(&self) -> Vec<bool> {
        let mut dense = vec![false; self.buffer_len];
        for id in &self.selected {
            dense[id.0 as usize] = true;
        }
        dense
    }

    pub fn contains(&self, id: BatchId) -> bool {
        self.selected.contains(&id)
    }

    pub fn selected(&self) -> &BTreeSet<BatchId> {
        &self.selected
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer_len
    }

    /// Number of selected batches.
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.selected.iter().map(|b| b.0).collect()
    }

    pub(crate) fn insert(&mut self, id: BatchId) {
        debug_assert!((id.0 as usize) < self.buffer_len);
        self.selected.insert(id);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    BottomUp,
    Parallel,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub lambda: f64,
    pub strategy: Strategy,
    /// Quantile cutoff used by parallel selection.
    pub quantile_q: f64,
    /// Largest buffer exhaustive selection will enumerate.
    pub max_exhaustive: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            strategy: Strategy::BottomUp,
            quantile_q: 0.5,
            max_exhaustive: 15,
        }
    }
}

impl SelectionConfig {
    pub fn bottom_up(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn parallel(lambda: f64, quantile_q: f64) -> Self {
        Self {
            lambda,
            strategy: Strategy::Parallel,
            quantile_q,
            ..Self::default()
        }
    }

    pub fn exhaustive(lambda: f64) -> Self {
        Self {
            lambda,
            strategy: Strategy::Exhaustive,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid("lambda", format!("{} must be finite and >= 0", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.quantile_q) {
            return Err(invalid(
                "quantile_q",
                format!("{} is outside [0, 1]", self.quantile_q),
            ));
        }
        Ok(())
    }
}
