//! Batch construction: sequential simulation with fictional oracles, and
//! greedy batch-ENS with Monte Carlo label sampling.
//!
//! Sequential simulation runs a sequential policy `b` times, inventing a
//! label for each pick via a fictional oracle and conditioning on it, then
//! rolls every fictional observation back. Batch-ENS instead grows the batch
//! greedily by marginal gain of the batch objective: the sum of the batch
//! members' probabilities plus the expected top-(T - b - |D|) probability
//! sum after jointly observing the batch, with the label expectation either
//! enumerated exactly (tiny batches) or replaced by Monte Carlo samples.
//!
//! Joint label distributions under the k-NN model are defined by the chain
//! rule in ascending point-id order, everywhere: sampling, exact enumeration,
//! and the candidate evaluations inside the greedy loop all factor the same
//! way, so the Monte Carlo estimates converge to the exact objective.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::model::KnnModel;
use crate::policy::ens::ens_select;
use crate::policy::myopic::{one_step_select, two_step_select};
use crate::policy::{InnerPolicy, OracleKind, PolicyError};
use crate::posterior::Posterior;
use crate::state::SearchState;
use crate::topsum::TopSumIndex;

/// Label-inventing rule used during sequential simulation.
#[derive(Debug, Clone)]
pub struct FictionalOracle {
    kind: OracleKind,
    rng: ChaCha8Rng,
}

impl FictionalOracle {
    pub fn from_rng(kind: OracleKind, rng: ChaCha8Rng) -> Self {
        Self { kind, rng }
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    /// Produces a fictional label for a point with marginal probability `p`.
    pub fn label(&mut self, p: f64) -> bool {
        match self.kind {
            OracleKind::Sampling => self.rng.random::<f64>() < p,
            OracleKind::MostLikely => p > 0.5,
            OracleKind::AlwaysNegative => false,
            OracleKind::AlwaysPositive => true,
        }
    }
}

/// Builds a batch by running the inner sequential policy `batch` times,
/// conditioning on fictional labels between picks, then rolling everything
/// back. The inner ENS policy sees the remaining budget shrink by one per
/// simulated pick.
pub fn sequential_simulation_batch(
    post: &mut Posterior,
    state: &SearchState,
    inner: InnerPolicy,
    oracle: &mut FictionalOracle,
    batch: usize,
) -> Result<Vec<usize>, PolicyError> {
    if post.unlabeled_count() < batch {
        return Err(PolicyError::PoolTooSmall {
            need: batch,
            have: post.unlabeled_count(),
        });
    }
    if batch > state.remaining() {
        return Err(PolicyError::BudgetTooSmall {
            batch,
            remaining: state.remaining(),
        });
    }
    let mut picks = Vec::with_capacity(batch);
    let mut checkpoints = Vec::with_capacity(batch);
    for j in 0..batch {
        let remaining_now = state.remaining() - j;
        let x = match inner {
            InnerPolicy::OneStep => {
                one_step_select(post.index())
                    .ok_or(PolicyError::EmptyPool)?
                    .0
            }
            InnerPolicy::TwoStep => {
                let (model, index) = post.split_mut();
                two_step_select(model, index, remaining_now).ok_or(PolicyError::EmptyPool)?
            }
            InnerPolicy::Ens => {
                let (model, index) = post.split_mut();
                ens_select(model, index, remaining_now, true)
                    .ok_or(PolicyError::EmptyPool)?
                    .0
                    .point
            }
        };
        let y = oracle.label(post.probability(x));
        checkpoints.push(post.condition(x, y)?);
        picks.push(x);
    }
    for cp in checkpoints.into_iter().rev() {
        post.rollback(cp)?;
    }
    Ok(picks)
}

/// One joint label assignment for a batch, in ascending point-id order.
#[derive(Debug, Clone)]
pub struct LabelSample {
    pub assignment: Vec<(usize, bool)>,
}

/// Draws `n_samples` joint label assignments for `points` by sequentially
/// sampling each conditional in ascending-id order (conditioning as it
/// goes, then rolling back). Samples are independent given the stream.
pub fn sample_joint_labels<R: Rng>(
    model: &mut KnnModel,
    points: &[usize],
    rng: &mut R,
    n_samples: usize,
) -> Result<Vec<LabelSample>, PolicyError> {
    let sorted = validate_batch(model, points)?;
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut checkpoints = Vec::with_capacity(sorted.len());
        let mut assignment = Vec::with_capacity(sorted.len());
        for &x in &sorted {
            let p = model.probability(x);
            let y = rng.random::<f64>() < p;
            checkpoints.push(model.condition(x, y)?);
            assignment.push((x, y));
        }
        for cp in checkpoints.into_iter().rev() {
            model.rollback(cp)?;
        }
        out.push(LabelSample { assignment });
    }
    Ok(out)
}

/// Exact batch objective: sum of the batch's marginal probabilities plus the
/// exact expectation (over all `2^b` labelings, chain rule in ascending-id
/// order) of the top-`(remaining - b)` probability sum after conditioning.
/// The model is restored before returning. Guarded to `b <= 12`.
pub fn batch_ens_objective_exact(
    model: &mut KnnModel,
    index: &TopSumIndex,
    remaining: usize,
    batch: &[usize],
) -> Result<f64, PolicyError> {
    const MAX_EXACT: usize = 12;
    if batch.len() > MAX_EXACT {
        return Err(PolicyError::BatchTooLarge {
            got: batch.len(),
            max: MAX_EXACT,
        });
    }
    let sorted = validate_batch(model, batch)?;
    if remaining < sorted.len() {
        return Err(PolicyError::BudgetTooSmall {
            batch: sorted.len(),
            remaining,
        });
    }
    let m = remaining - sorted.len();
    let neighborhood = batch_neighborhood(model, &sorted);
    let mut removals: Vec<usize> = sorted.clone();
    removals.extend_from_slice(&neighborhood);

    let immediate: f64 = sorted.iter().map(|&x| model.probability(x)).sum();
    let mut expectation = 0.0;
    enumerate_labelings(
        model,
        index,
        &sorted,
        0,
        1.0,
        m,
        &removals,
        &neighborhood,
        &mut expectation,
    )?;
    Ok(immediate + expectation)
}

#[allow(clippy::too_many_arguments)]
fn enumerate_labelings(
    model: &mut KnnModel,
    index: &TopSumIndex,
    sorted: &[usize],
    depth: usize,
    weight: f64,
    m: usize,
    removals: &[usize],
    neighborhood: &[usize],
    acc: &mut f64,
) -> Result<(), PolicyError> {
    if depth == sorted.len() {
        let insertions: Vec<(usize, f64)> = neighborhood
            .iter()
            .map(|&z| (z, model.probability(z)))
            .collect();
        *acc += weight * index.top_sum_with_deltas(m, removals, &insertions)?;
        return Ok(());
    }
    let x = sorted[depth];
    let p = model.probability(x);
    for y in [false, true] {
        let w = if y { p } else { 1.0 - p };
        let cp = model.condition(x, y)?;
        enumerate_labelings(
            model,
            index,
            sorted,
            depth + 1,
            weight * w,
            m,
            removals,
            neighborhood,
            acc,
        )?;
        model.rollback(cp)?;
    }
    Ok(())
}

/// Monte Carlo batch objective: like [`batch_ens_objective_exact`] but the
/// label expectation is averaged over pre-drawn [`LabelSample`]s.
pub fn batch_ens_objective_sampled(
    model: &mut KnnModel,
    index: &TopSumIndex,
    remaining: usize,
    batch: &[usize],
    samples: &[LabelSample],
) -> Result<f64, PolicyError> {
    if samples.is_empty() {
        return Err(PolicyError::NoSamples);
    }
    let sorted = validate_batch(model, batch)?;
    if remaining < sorted.len() {
        return Err(PolicyError::BudgetTooSmall {
            batch: sorted.len(),
            remaining,
        });
    }
    let m = remaining - sorted.len();
    let neighborhood = batch_neighborhood(model, &sorted);
    let mut removals: Vec<usize> = sorted.clone();
    removals.extend_from_slice(&neighborhood);

    let immediate: f64 = sorted.iter().map(|&x| model.probability(x)).sum();
    let mut total = 0.0;
    for sample in samples {
        if sample.assignment.len() != sorted.len()
            || sample
                .assignment
                .iter()
                .zip(&sorted)
                .any(|(&(x, _), &s)| x != s)
        {
            return Err(PolicyError::SampleMismatch);
        }
        let mut checkpoints = Vec::with_capacity(sorted.len());
        for &(x, y) in &sample.assignment {
            checkpoints.push(model.condition(x, y)?);
        }
        let insertions: Vec<(usize, f64)> = neighborhood
            .iter()
            .map(|&z| (z, model.probability(z)))
            .collect();
        total += index.top_sum_with_deltas(m, &removals, &insertions)?;
        for cp in checkpoints.into_iter().rev() {
            model.rollback(cp)?;
        }
    }
    Ok(immediate + total / samples.len() as f64)
}

/// Greedy batch-ENS: grows the batch by the candidate maximizing the sampled
/// objective of `X ∪ {x}` (ties by ascending id), using `n_samples` label
/// samples per greedy step shared across candidates (common random numbers).
/// The top-sum size is `remaining - batch` throughout, so the final batch of
/// a run is purely exploitive. The posterior is left untouched.
pub fn batch_ens_select<R: Rng>(
    post: &Posterior,
    remaining: usize,
    batch: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<usize>, PolicyError> {
    batch_ens_select_impl(post, remaining, batch, n_samples, rng, false)
}

fn batch_ens_select_impl<R: Rng>(
    post: &Posterior,
    remaining: usize,
    batch: usize,
    n_samples: usize,
    rng: &mut R,
    force_explicit: bool,
) -> Result<Vec<usize>, PolicyError> {
    if n_samples == 0 {
        return Err(PolicyError::NoSamples);
    }
    if post.unlabeled_count() < batch {
        return Err(PolicyError::PoolTooSmall {
            need: batch,
            have: post.unlabeled_count(),
        });
    }
    if batch > remaining {
        return Err(PolicyError::BudgetTooSmall { batch, remaining });
    }
    let m = remaining - batch;
    let mut chosen: Vec<usize> = Vec::with_capacity(batch);
    for _ in 0..batch {
        let x = greedy_step(post, m, &chosen, n_samples, rng, force_explicit)?;
        chosen.push(x);
    }
    Ok(chosen)
}

/// One greedy step: returns the candidate maximizing the sampled objective
/// of `chosen ∪ {x}`.
fn greedy_step<R: Rng>(
    post: &Posterior,
    m: usize,
    chosen: &[usize],
    n_samples: usize,
    rng: &mut R,
    force_explicit: bool,
) -> Result<usize, PolicyError> {
    let model = post.model();
    let index = post.index();

    // With no future budget the expectation term vanishes and the marginal
    // gain is just p(x): pure exploitation.
    if m == 0 {
        return index
            .max_excluding(chosen)
            .map(|(id, _)| id)
            .ok_or(PolicyError::EmptyPool);
    }

    let candidates: Vec<usize> = model.unlabeled().filter(|x| !chosen.contains(x)).collect();
    if candidates.is_empty() {
        return Err(PolicyError::EmptyPool);
    }
    let mut members = chosen.to_vec();
    members.sort_unstable();
    let neighborhood = batch_neighborhood(model, &members);

    // Common random numbers: one uniform per member (keyed by identity, so a
    // candidate inserted mid-chain leaves the prefix labels unchanged) and
    // one for the candidate slot, redrawn per sample, shared across all
    // candidates within the step.
    let member_u: Vec<Vec<f64>> = (0..n_samples)
        .map(|_| (0..members.len()).map(|_| rng.random::<f64>()).collect())
        .collect();
    let cand_u: Vec<f64> = (0..n_samples).map(|_| rng.random::<f64>()).collect();

    let mut future_acc = vec![0.0f64; candidates.len()];
    let chunk = (candidates.len() / (rayon::current_num_threads() * 4).max(1)).max(64);

    for s in 0..n_samples {
        // No-candidate pass: sample the members' labels in ascending-id
        // order, recording each member's accumulators right before its own
        // conditioning so a candidate's influence on it replays in O(1).
        let mut nocand = model.clone();
        let mut member_acc = Vec::with_capacity(members.len());
        let mut member_label = Vec::with_capacity(members.len());
        for (j, &xj) in members.iter().enumerate() {
            member_acc.push(nocand.accumulators(xj));
            let y = member_u[s][j] < nocand.probability(xj);
            member_label.push(y);
            nocand.condition(xj, y)?;
        }

        // Snapshot index mirroring the no-candidate conditioning.
        let mut index_s = index.clone();
        for &xj in &members {
            index_s.remove(xj)?;
        }
        for &z in &neighborhood {
            index_s.update(z, nocand.probability(z))?;
        }

        let ctx = SampleContext {
            model,
            index,
            index_s: &index_s,
            nocand: &nocand,
            members: &members,
            member_acc: &member_acc,
            member_label: &member_label,
            member_u: &member_u[s],
            neighborhood: &neighborhood,
            m,
            cand_u: cand_u[s],
            force_explicit,
        };

        future_acc
            .par_chunks_mut(chunk)
            .zip(candidates.par_chunks(chunk))
            .for_each(|(acc_chunk, cand_chunk)| {
                // Chunk-local prefix model: members with id < candidate carry
                // their sampled labels; candidates ascend, so the prefix only
                // ever extends.
                let mut prefix = ctx.model.clone();
                let mut prefix_len = 0usize;
                for (slot, &x) in cand_chunk.iter().enumerate() {
                    while prefix_len < ctx.members.len() && ctx.members[prefix_len] < x {
                        prefix
                            .condition(ctx.members[prefix_len], ctx.member_label[prefix_len])
                            .expect("members are unlabeled in the base model");
                        prefix_len += 1;
                    }
                    acc_chunk[slot] += ctx.evaluate(&mut prefix, prefix_len, x);
                }
            });
    }

    let mut best: Option<(f64, usize)> = None;
    for (slot, &x) in candidates.iter().enumerate() {
        let score = model.probability(x) + future_acc[slot] / n_samples as f64;
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, x));
        }
    }
    Ok(best.expect("candidates nonempty").1)
}

/// Shared per-sample context for candidate evaluation.
struct SampleContext<'a> {
    model: &'a KnnModel,
    index: &'a TopSumIndex,
    index_s: &'a TopSumIndex,
    nocand: &'a KnnModel,
    members: &'a [usize],
    member_acc: &'a [(f64, f64)],
    member_label: &'a [bool],
    member_u: &'a [f64],
    neighborhood: &'a [usize],
    m: usize,
    cand_u: f64,
    force_explicit: bool,
}

impl SampleContext<'_> {
    /// Expected future top-sum contribution of candidate `x` under this
    /// sample. `prefix` holds the members with id < x conditioned on their
    /// sampled labels.
    fn evaluate(&self, prefix: &mut KnnModel, prefix_len: usize, x: usize) -> f64 {
        let p_x = prefix.probability(x);
        let y_x = self.cand_u < p_x;
        let gamma = self.model.gamma();
        let gp = gamma * self.model.prior();

        // Inserting x into the chain can only flip the sampled label of a
        // later member that lists x as a neighbor; check those in O(deg).
        let mut flip = self.force_explicit;
        if !flip {
            for &(z, w) in self.model.graph().reverse(x) {
                if let Ok(j) = self.members.binary_search(&(z as usize)) {
                    if j >= prefix_len {
                        let (sw, swp) = self.member_acc[j];
                        let p_with = (gp + swp + if y_x { w } else { 0.0 }) / (gamma + sw + w);
                        if (self.member_u[j] < p_with) != self.member_label[j] {
                            flip = true;
                            break;
                        }
                    }
                }
            }
        }

        if !flip {
            // Fast path: the joint assignment equals the no-candidate one
            // plus (x, y_x), so x's influence is a small delta on index_s.
            let mut removals = Vec::with_capacity(self.model.graph().reverse(x).len() + 1);
            removals.push(x);
            let mut insertions = Vec::with_capacity(self.model.graph().reverse(x).len());
            for &(z, w) in self.model.graph().reverse(x) {
                let z = z as usize;
                if self.model.is_labeled(z) || self.members.binary_search(&z).is_ok() {
                    continue;
                }
                let (sw, swp) = self.nocand.accumulators(z);
                let p_z = (gp + swp + if y_x { w } else { 0.0 }) / (gamma + sw + w);
                removals.push(z);
                insertions.push((z, p_z));
            }
            self.index_s
                .top_sum_with_deltas(self.m, &removals, &insertions)
                .expect("deltas reference indexed points")
        } else {
            // Explicit path: replay the whole chain with x inserted, then
            // query the base index with the full delta set.
            let mut fm = prefix.clone();
            fm.condition(x, y_x).expect("candidate is unlabeled");
            for j in prefix_len..self.members.len() {
                let p = fm.probability(self.members[j]);
                let y = self.member_u[j] < p;
                fm.condition(self.members[j], y)
                    .expect("member is unlabeled");
            }
            let mut changed: Vec<usize> = self.neighborhood.to_vec();
            for &(z, _) in self.model.graph().reverse(x) {
                let z = z as usize;
                if !self.model.is_labeled(z) && self.members.binary_search(&z).is_err() && z != x {
                    changed.push(z);
                }
            }
            changed.sort_unstable();
            changed.dedup();
            let mut removals: Vec<usize> = self.members.to_vec();
            removals.push(x);
            let mut insertions = Vec::with_capacity(changed.len());
            for &z in &changed {
                if z == x {
                    continue;
                }
                removals.push(z);
                insertions.push((z, fm.probability(z)));
            }
            self.index
                .top_sum_with_deltas(self.m, &removals, &insertions)
                .expect("deltas reference indexed points")
        }
    }
}

/// Report from [`monotonicity_diagnostic`]: how often sampled marginal gains
/// of the batch objective violated monotonicity. The objective is
/// conjectured (not proven) monotone submodular, so this is reporting only —
/// nothing in the policies assumes a clean report.
#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    pub trials: usize,
    pub negative_gains: usize,
    pub min_gain: f64,
}

/// Samples marginal gains `f(X ∪ {x}) - f(X)` of the exact batch objective
/// on random nested batches and counts sign violations.
pub fn monotonicity_diagnostic<R: Rng>(
    model: &mut KnnModel,
    index: &TopSumIndex,
    remaining: usize,
    trials: usize,
    rng: &mut R,
) -> Result<MonotonicityReport, PolicyError> {
    let mut negative_gains = 0;
    let mut min_gain = f64::INFINITY;
    for _ in 0..trials {
        let pool: Vec<usize> = model.unlabeled().collect();
        let max_base = remaining
            .saturating_sub(1)
            .min(pool.len().saturating_sub(1))
            .min(3);
        if max_base == 0 || pool.len() < 2 {
            return Err(PolicyError::PoolTooSmall {
                need: 2,
                have: pool.len(),
            });
        }
        let base_len = rng.random_range(1..=max_base);
        let mut batch: Vec<usize> = Vec::with_capacity(base_len + 1);
        while batch.len() < base_len + 1 {
            let x = pool[rng.random_range(0..pool.len())];
            if !batch.contains(&x) {
                batch.push(x);
            }
        }
        let with = batch_ens_objective_exact(model, index, remaining, &batch)?;
        let without = batch_ens_objective_exact(model, index, remaining - 1, &batch[..base_len])?;
        let gain = with - without;
        min_gain = min_gain.min(gain);
        if gain < 0.0 {
            negative_gains += 1;
        }
    }
    Ok(MonotonicityReport {
        trials,
        negative_gains,
        min_gain,
    })
}

/// Distinct, unlabeled, nonempty; returns the batch sorted ascending.
fn validate_batch(model: &KnnModel, batch: &[usize]) -> Result<Vec<usize>, PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyPool);
    }
    let mut sorted = batch.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(PolicyError::BadBatchPoint(w[0]));
        }
    }
    for &x in &sorted {
        if x >= model.len() || model.is_labeled(x) {
            return Err(PolicyError::BadBatchPoint(x));
        }
    }
    Ok(sorted)
}

/// Unlabeled non-members whose probability the batch labels can move.
fn batch_neighborhood(model: &KnnModel, members_sorted: &[usize]) -> Vec<usize> {
    let mut nbh: Vec<usize> = members_sorted
        .iter()
        .flat_map(|&x| model.graph().reverse(x).iter().map(|&(z, _)| z as usize))
        .filter(|&z| !model.is_labeled(z) && members_sorted.binary_search(&z).is_err())
        .collect();
    nbh.sort_unstable();
    nbh.dedup();
    nbh
}
