//! Brute-force ground truth on tiny instances.
//!
//! Full enumeration of the Bayesian optimal policy value: every batch, every
//! labeling, recursively to the budget horizon. Exponential in everything,
//! hence the hard tractability guards. Used by tests and diagnostics to
//! check that the practical policies attain (or approach) the optimum where
//! the optimum is computable at all.

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{KnnModel, ModelError};
use crate::policy::{BatchSelector, PolicyError};
use crate::posterior::Posterior;
use crate::state::SearchState;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance too large for exact enumeration: {what} = {got} exceeds {max}")]
    GuardExceeded {
        what: &'static str,
        got: usize,
        max: usize,
    },
    #[error("remaining budget must be at least 1")]
    NoBudget,
    #[error("batch size must be at least 1")]
    NoBatch,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Result of an exact policy-value computation.
#[derive(Debug, Clone)]
pub struct OptimalValue {
    pub expected_utility: f64,
    /// A maximizing first batch (lexicographically smallest among ties).
    pub best_action: Vec<usize>,
    /// Search-tree nodes expanded.
    pub node_count: u64,
}

const MAX_POOL: usize = 12;
const MAX_REMAINING: usize = 6;
const MAX_BATCH: usize = 3;

/// Exact optimal expected utility for the remaining search: the best batch
/// of `min(batch_size, remaining)` points assuming optimal continued
/// behavior, with expectations over the chain-rule joint (ascending id).
/// Guarded to pools of at most 12 unlabeled points, remaining budget 6,
/// batch size 3.
pub fn optimal_expected_utility(
    model: &mut KnnModel,
    remaining: usize,
    batch_size: usize,
) -> Result<OptimalValue, OracleError> {
    if remaining == 0 {
        return Err(OracleError::NoBudget);
    }
    if batch_size == 0 {
        return Err(OracleError::NoBatch);
    }
    guard("unlabeled pool", model.unlabeled_count(), MAX_POOL)?;
    guard("remaining budget", remaining, MAX_REMAINING)?;
    guard("batch size", batch_size, MAX_BATCH)?;

    let mut search = Search {
        memo: HashMap::new(),
        nodes: 0,
        batch_size,
    };
    let b = batch_size.min(remaining);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for batch in combinations(&model.unlabeled().collect::<Vec<_>>(), b) {
        let q = search.q_value(model, remaining, &batch)?;
        if best.as_ref().is_none_or(|(v, _)| q > *v) {
            best = Some((q, batch));
        }
    }
    let (expected_utility, best_action) = best.expect("guarded nonempty pool");
    Ok(OptimalValue {
        expected_utility,
        best_action,
        node_count: search.nodes,
    })
}

/// Exact expected terminal utility of playing `action` now and optimally
/// afterwards. Same guards as [`optimal_expected_utility`].
pub fn expected_utility_of_action(
    model: &mut KnnModel,
    remaining: usize,
    batch_size: usize,
    action: &[usize],
) -> Result<f64, OracleError> {
    if remaining == 0 {
        return Err(OracleError::NoBudget);
    }
    guard("unlabeled pool", model.unlabeled_count(), MAX_POOL)?;
    guard("remaining budget", remaining, MAX_REMAINING)?;
    guard("batch size", batch_size.max(action.len()), MAX_BATCH)?;
    let mut search = Search {
        memo: HashMap::new(),
        nodes: 0,
        batch_size,
    };
    let mut sorted = action.to_vec();
    sorted.sort_unstable();
    search.q_value(model, remaining, &sorted)
}

struct Search {
    /// Value of the optimal continuation keyed by the ordered observation
    /// multiset; the remaining budget is implied by its size.
    memo: HashMap<Vec<(u32, u8)>, f64>,
    nodes: u64,
    batch_size: usize,
}

impl Search {
    fn observation_key(model: &KnnModel) -> Vec<(u32, u8)> {
        (0..model.len())
            .filter_map(|x| model.label_of(x).map(|y| (x as u32, y as u8)))
            .collect()
    }

    fn value(&mut self, model: &mut KnnModel, remaining: usize) -> Result<f64, OracleError> {
        if remaining == 0 {
            return Ok(0.0);
        }
        let key = Self::observation_key(model);
        if let Some(&v) = self.memo.get(&key) {
            return Ok(v);
        }
        self.nodes += 1;
        let b = self.batch_size.min(remaining);
        let pool: Vec<usize> = model.unlabeled().collect();
        let mut best = f64::NEG_INFINITY;
        for batch in combinations(&pool, b) {
            let q = self.q_value(model, remaining, &batch)?;
            if q > best {
                best = q;
            }
        }
        self.memo.insert(key, best);
        Ok(best)
    }

    /// `sum p + E_Y[value after observing (batch, Y)]`, batch sorted.
    fn q_value(
        &mut self,
        model: &mut KnnModel,
        remaining: usize,
        batch: &[usize],
    ) -> Result<f64, OracleError> {
        let immediate: f64 = batch.iter().map(|&x| model.probability(x)).sum();
        let future = self.expect_over_labelings(model, remaining, batch, 0, 1.0)?;
        Ok(immediate + future)
    }

    fn expect_over_labelings(
        &mut self,
        model: &mut KnnModel,
        remaining: usize,
        batch: &[usize],
        depth: usize,
        weight: f64,
    ) -> Result<f64, OracleError> {
        if depth == batch.len() {
            return Ok(weight * self.value(model, remaining - batch.len())?);
        }
        let x = batch[depth];
        let p = model.probability(x);
        let mut total = 0.0;
        for y in [false, true] {
            let w = if y { p } else { 1.0 - p };
            let cp = model.condition(x, y)?;
            total += self.expect_over_labelings(model, remaining, batch, depth + 1, weight * w)?;
            model.rollback(cp)?;
        }
        Ok(total)
    }
}

/// Probability that at least one point of `batch` is positive, under the
/// ascending-id chain-rule joint.
pub fn batch_p_at_least_one(model: &mut KnnModel, batch: &[usize]) -> Result<f64, OracleError> {
    let mut sorted = batch.to_vec();
    sorted.sort_unstable();
    let mut all_zero = 1.0;
    let mut checkpoints = Vec::with_capacity(sorted.len());
    for &x in &sorted {
        all_zero *= 1.0 - model.probability(x);
        checkpoints.push(model.condition(x, false)?);
    }
    for cp in checkpoints.into_iter().rev() {
        model.rollback(cp)?;
    }
    Ok(1.0 - all_zero)
}

/// The size-`b` batch maximizing the probability of at least one positive,
/// by exhaustive scan over all C(n, b) batches (ties: lexicographically
/// smallest). Guarded to pools of 15 and batches of 4.
pub fn optimal_p_at_least_one(
    model: &mut KnnModel,
    b: usize,
) -> Result<(Vec<usize>, f64), OracleError> {
    if b == 0 {
        return Err(OracleError::NoBatch);
    }
    guard("unlabeled pool", model.unlabeled_count(), 15)?;
    guard("batch size", b, 4)?;
    let pool: Vec<usize> = model.unlabeled().collect();
    if pool.len() < b {
        return Err(OracleError::GuardExceeded {
            what: "batch size",
            got: b,
            max: pool.len(),
        });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for batch in combinations(&pool, b) {
        let v = batch_p_at_least_one(model, &batch)?;
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, batch));
        }
    }
    let (value, batch) = best.expect("pool at least b");
    Ok((batch, value))
}

/// Expected terminal utility of running `selector` from the current state to
/// budget exhaustion, by exhaustive expectation over the label outcomes of
/// every selected batch. Stochastic selectors are evaluated conditioned on
/// their stream: each label branch continues from an identical clone.
pub fn expected_utility_of_policy<S>(
    post: &mut Posterior,
    state: &SearchState,
    selector: &S,
) -> Result<f64, OracleError>
where
    S: BatchSelector + Clone,
{
    guard("unlabeled pool", post.unlabeled_count(), 15)?;
    guard("remaining budget", state.remaining(), 8)?;
    policy_expectation(post, state.clone(), selector.clone())
}

fn policy_expectation<S>(
    post: &mut Posterior,
    state: SearchState,
    mut selector: S,
) -> Result<f64, OracleError>
where
    S: BatchSelector + Clone,
{
    if state.is_exhausted() {
        return Ok(0.0);
    }
    let batch = selector.select(post, &state)?;
    let mut sorted = batch;
    sorted.sort_unstable();
    branch_over_labels(post, &state, &selector, &sorted, 0, 1.0, 0)
}

fn branch_over_labels<S>(
    post: &mut Posterior,
    state: &SearchState,
    selector: &S,
    batch: &[usize],
    depth: usize,
    weight: f64,
    positives: usize,
) -> Result<f64, OracleError>
where
    S: BatchSelector + Clone,
{
    if depth == batch.len() {
        let mut next_state = state.clone();
        let pairs: Vec<(usize, bool)> = batch
            .iter()
            .map(|&x| (x, post.model().label_of(x).expect("conditioned")))
            .collect();
        next_state
            .record_batch(&pairs)
            .expect("batch within budget");
        let future = policy_expectation(post, next_state, selector.clone())?;
        return Ok(weight * (positives as f64 + future));
    }
    let x = batch[depth];
    let p = post.probability(x);
    let mut total = 0.0;
    for y in [false, true] {
        let w = if y { p } else { 1.0 - p };
        let cp = post.condition(x, y)?;
        total += branch_over_labels(
            post,
            state,
            selector,
            batch,
            depth + 1,
            weight * w,
            positives + y as usize,
        )?;
        post.rollback(cp)?;
    }
    Ok(total)
}

fn guard(what: &'static str, got: usize, max: usize) -> Result<(), OracleError> {
    if got > max {
        return Err(OracleError::GuardExceeded { what, got, max });
    }
    Ok(())
}

/// All size-`b` subsets of `pool` (assumed sorted ascending), in
/// lexicographic order.
fn combinations(pool: &[usize], b: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(b);
    fn rec(
        pool: &[usize],
        b: usize,
        start: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if current.len() == b {
            out.push(current.clone());
            return;
        }
        let need = b - current.len();
        for i in start..=pool.len().saturating_sub(need) {
            current.push(pool[i]);
            rec(pool, b, i + 1, current, out);
            current.pop();
        }
    }
    if b <= pool.len() {
        rec(pool, b, 0, &mut current, &mut out);
    }
    out
}
