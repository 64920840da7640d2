//! Keeps the model and the top-sum index synchronized.
//!
//! Policies need both views of the posterior: the [`KnnModel`] for
//! conditioning and per-point probabilities, and the [`TopSumIndex`] for
//! ranked queries over the unlabeled pool. [`Posterior`] owns the pair and
//! guarantees the index always mirrors the model's unlabeled pool, both for
//! committed observations and for hypothetical ones that are later rolled
//! back.

use crate::model::{Checkpoint, KnnModel, ModelError};
use crate::topsum::TopSumIndex;

/// Undo record for the index side of one conditioning step.
#[derive(Debug)]
struct IndexUndo {
    /// The conditioned point and its pre-removal probability.
    removed: (usize, f64),
    /// Affected entries with their old probabilities.
    updated: Vec<(usize, f64)>,
}

/// Token pairing a model checkpoint with its index undo record.
#[derive(Debug)]
pub struct PosteriorCheckpoint {
    model_cp: Checkpoint,
    undo: IndexUndo,
}

/// A [`KnnModel`] and its [`TopSumIndex`], kept in lockstep.
#[derive(Debug, Clone)]
pub struct Posterior {
    model: KnnModel,
    index: TopSumIndex,
}

impl Posterior {
    pub fn new(model: KnnModel) -> Self {
        let index = TopSumIndex::from_model(&model);
        Self { model, index }
    }

    pub fn model(&self) -> &KnnModel {
        &self.model
    }

    pub fn index(&self) -> &TopSumIndex {
        &self.index
    }

    /// Mutable model access paired with the read-only index, for scoring
    /// routines that condition hypothetically while querying the base index.
    pub fn split_mut(&mut self) -> (&mut KnnModel, &TopSumIndex) {
        (&mut self.model, &self.index)
    }

    pub fn probability(&self, x: usize) -> f64 {
        self.model.probability(x)
    }

    pub fn unlabeled_count(&self) -> usize {
        self.model.unlabeled_count()
    }

    /// Conditions on `(x, positive)` and updates the index to match,
    /// returning a checkpoint that can undo both.
    pub fn condition(
        &mut self,
        x: usize,
        positive: bool,
    ) -> Result<PosteriorCheckpoint, ModelError> {
        let affected = self.model.affected_set(x);
        let model_cp = self.model.condition(x, positive)?;
        let removed_p = self.index.remove(x).expect("conditioned point was indexed");
        let mut updated = Vec::with_capacity(affected.len());
        for z in affected {
            let old = self
                .index
                .update(z, self.model.probability(z))
                .expect("affected point was indexed");
            updated.push((z, old));
        }
        Ok(PosteriorCheckpoint {
            model_cp,
            undo: IndexUndo {
                removed: (x, removed_p),
                updated,
            },
        })
    }

    /// Undoes one conditioning step. Checkpoints obey the same LIFO
    /// discipline as the model's.
    pub fn rollback(&mut self, cp: PosteriorCheckpoint) -> Result<(), ModelError> {
        self.model.rollback(cp.model_cp)?;
        for &(z, old) in cp.undo.updated.iter().rev() {
            self.index
                .update(z, old)
                .expect("affected point stays indexed");
        }
        let (x, p) = cp.undo.removed;
        self.index
            .insert(x, p)
            .expect("conditioned point was removed from the index");
        Ok(())
    }

    /// Conditions on a real observation that will never be rolled back.
    pub fn commit(&mut self, x: usize, positive: bool) -> Result<(), ModelError> {
        self.condition(x, positive).map(|_| ())
    }
}
