//! Budget accounting for one search run.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("budget T = {budget} and batch size b = {batch} must satisfy T >= b >= 1")]
    BadBudget { budget: usize, batch: usize },
    #[error("recording {got} labels would exceed the remaining budget {remaining}")]
    BudgetExceeded { got: usize, remaining: usize },
}

/// Tracks the query budget `T`, the batch size `b`, and the labels gathered
/// so far, grouped into the batches that produced them.
#[derive(Debug, Clone)]
pub struct SearchState {
    budget_total: usize,
    batch_size: usize,
    spent: usize,
    batches: Vec<Vec<(usize, bool)>>,
}

impl SearchState {
    pub fn new(budget_total: usize, batch_size: usize) -> Result<Self, StateError> {
        if batch_size < 1 || budget_total < batch_size {
            return Err(StateError::BadBudget {
                budget: budget_total,
                batch: batch_size,
            });
        }
        Ok(Self {
            budget_total,
            batch_size,
            spent: 0,
            batches: Vec::new(),
        })
    }

    pub fn budget_total(&self) -> usize {
        self.budget_total
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn spent(&self) -> usize {
        self.spent
    }

    pub fn remaining(&self) -> usize {
        self.budget_total - self.spent
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining() == 0
    }

    /// Size of the next batch: `b`, shrunk to the remaining budget for the
    /// final batch when `T mod b != 0`.
    pub fn next_batch_size(&self) -> usize {
        self.batch_size.min(self.remaining())
    }

    /// Records one revealed batch of `(point, label)` pairs.
    pub fn record_batch(&mut self, pairs: &[(usize, bool)]) -> Result<(), StateError> {
        if pairs.len() > self.remaining() {
            return Err(StateError::BudgetExceeded {
                got: pairs.len(),
                remaining: self.remaining(),
            });
        }
        self.spent += pairs.len();
        self.batches.push(pairs.to_vec());
        Ok(())
    }

    pub fn batches(&self) -> &[Vec<(usize, bool)>] {
        &self.batches
    }

    /// All labels gathered so far, in query order.
    pub fn labeled(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.batches.iter().flatten().copied()
    }

    /// Number of targets found so far.
    pub fn targets_found(&self) -> usize {
        self.labeled().filter(|&(_, y)| y).count()
    }
}
