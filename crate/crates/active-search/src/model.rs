//! The k-NN posterior model.
//!
//! For an unlabeled point `x` the posterior marginal probability of being a
//! target is
//!
//! ```text
//! Pr(y = 1 | x, D) = (gamma * prior + sum_{j in NN(x), j observed} w_j y_j)
//!                    / (gamma + sum_{j in NN(x), j observed} w_j)
//! ```
//!
//! where the sums run over the observed members of `x`'s forward neighbor
//! list. The pseudocount `gamma > 0` and `prior in (0,1)` keep every
//! probability strictly inside (0,1), which the pruning bounds rely on.
//!
//! Conditioning on an observation `(x, y)` touches only `reverse[x]`, so the
//! model keeps per-point accumulators and a LIFO delta log of the old values.
//! Rolling back a checkpoint restores the accumulators bit-exactly, which is
//! what allows policies to explore hypothetical observations cheaply.

use std::sync::Arc;

use thiserror::Error;

use crate::graph::NeighborGraph;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("gamma must be positive and finite, got {0}")]
    BadGamma(f64),
    #[error("prior must lie strictly inside (0,1), got {0}")]
    BadPrior(f64),
    #[error("point {0} is already labeled")]
    AlreadyLabeled(usize),
    #[error("point {0} out of range")]
    OutOfRange(usize),
    #[error(
        "rollback out of order: checkpoint {got} is not the most recent outstanding ({expected:?})"
    )]
    RollbackOrder { got: u64, expected: Option<u64> },
}

/// Token identifying one conditioning step. Rollback consumes the token and
/// must respect LIFO order with respect to other outstanding checkpoints.
#[derive(Debug, PartialEq, Eq)]
pub struct Checkpoint(u64);

#[derive(Debug, Clone, Copy)]
enum LogEntry {
    /// Marks the start of one conditioning step.
    Begin { token: u64, point: u32 },
    /// Old accumulator values of one reverse neighbor.
    Accum {
        point: u32,
        sum_w: f64,
        sum_w_pos: f64,
    },
}

/// Posterior marginal model over a fixed neighbor graph, with incremental
/// conditioning and bit-exact rollback.
#[derive(Debug, Clone)]
pub struct KnnModel {
    graph: Arc<NeighborGraph>,
    gamma: f64,
    prior: f64,
    /// -1 unlabeled, 0 observed negative, 1 observed positive.
    observed: Vec<i8>,
    labeled_count: usize,
    sum_w: Vec<f64>,
    sum_w_pos: Vec<f64>,
    log: Vec<LogEntry>,
    open: Vec<u64>,
    next_token: u64,
}

impl KnnModel {
    pub fn new(graph: Arc<NeighborGraph>, gamma: f64, prior: f64) -> Result<Self, ModelError> {
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(ModelError::BadGamma(gamma));
        }
        if !prior.is_finite() || prior <= 0.0 || prior >= 1.0 {
            return Err(ModelError::BadPrior(prior));
        }
        let n = graph.len();
        Ok(Self {
            graph,
            gamma,
            prior,
            observed: vec![-1; n],
            labeled_count: 0,
            sum_w: vec![0.0; n],
            sum_w_pos: vec![0.0; n],
            log: Vec::new(),
            open: Vec::new(),
            next_token: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn graph(&self) -> &NeighborGraph {
        &self.graph
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled_count
    }

    pub fn unlabeled_count(&self) -> usize {
        self.len() - self.labeled_count
    }

    pub fn is_labeled(&self, x: usize) -> bool {
        self.observed[x] >= 0
    }

    pub fn label_of(&self, x: usize) -> Option<bool> {
        match self.observed[x] {
            -1 => None,
            l => Some(l == 1),
        }
    }

    /// Iterates the unlabeled point ids in ascending order.
    pub fn unlabeled(&self) -> impl Iterator<Item = usize> + '_ {
        self.observed
            .iter()
            .enumerate()
            .filter(|(_, &o)| o < 0)
            .map(|(i, _)| i)
    }

    /// Posterior marginal probability of an unlabeled point.
    ///
    /// Panics if `x` is labeled; policies must query the unlabeled pool only.
    pub fn probability(&self, x: usize) -> f64 {
        assert!(self.observed[x] < 0, "probability of labeled point {x}");
        (self.gamma * self.prior + self.sum_w_pos[x]) / (self.gamma + self.sum_w[x])
    }

    /// The unlabeled points whose probability can change when `x` is
    /// conditioned: the unlabeled members of `reverse[x]`.
    pub fn affected_set(&self, x: usize) -> Vec<usize> {
        self.graph
            .reverse(x)
            .iter()
            .map(|&(z, _)| z as usize)
            .filter(|&z| self.observed[z] < 0)
            .collect()
    }

    /// Conditions the model on the observation `(x, positive)` and returns a
    /// checkpoint that can undo it. Every point in `reverse[x]` gains the
    /// corresponding edge weight in `sum_w`, and in `sum_w_pos` when the
    /// label is positive.
    pub fn condition(&mut self, x: usize, positive: bool) -> Result<Checkpoint, ModelError> {
        if x >= self.len() {
            return Err(ModelError::OutOfRange(x));
        }
        if self.observed[x] >= 0 {
            return Err(ModelError::AlreadyLabeled(x));
        }
        let token = self.next_token;
        self.next_token += 1;
        self.log.push(LogEntry::Begin {
            token,
            point: x as u32,
        });
        self.open.push(token);
        self.observed[x] = positive as i8;
        self.labeled_count += 1;
        // Split borrows: the graph Arc is read-only while accumulators mutate.
        let graph = Arc::clone(&self.graph);
        for &(z, w) in graph.reverse(x) {
            let z = z as usize;
            self.log.push(LogEntry::Accum {
                point: z as u32,
                sum_w: self.sum_w[z],
                sum_w_pos: self.sum_w_pos[z],
            });
            self.sum_w[z] += w;
            if positive {
                self.sum_w_pos[z] += w;
            }
        }
        Ok(Checkpoint(token))
    }

    /// Undoes the conditioning step identified by `cp`, restoring all
    /// accumulators bit-exactly. The checkpoint must be the most recent
    /// outstanding one (LIFO discipline).
    pub fn rollback(&mut self, cp: Checkpoint) -> Result<(), ModelError> {
        match self.open.last() {
            Some(&t) if t == cp.0 => {}
            other => {
                return Err(ModelError::RollbackOrder {
                    got: cp.0,
                    expected: other.copied(),
                })
            }
        }
        self.open.pop();
        while let Some(entry) = self.log.pop() {
            match entry {
                LogEntry::Accum {
                    point,
                    sum_w,
                    sum_w_pos,
                } => {
                    self.sum_w[point as usize] = sum_w;
                    self.sum_w_pos[point as usize] = sum_w_pos;
                }
                LogEntry::Begin { token, point } => {
                    debug_assert_eq!(token, cp.0);
                    self.observed[point as usize] = -1;
                    self.labeled_count -= 1;
                    return Ok(());
                }
            }
        }
        unreachable!("open checkpoint without a Begin entry");
    }

    /// Raw accumulators `(sum_w, sum_w_pos)` of a point. Exposed for the
    /// oracle-style tests that rebuild models from scratch.
    pub fn accumulators(&self, x: usize) -> (f64, f64) {
        (self.sum_w[x], self.sum_w_pos[x])
    }
}
