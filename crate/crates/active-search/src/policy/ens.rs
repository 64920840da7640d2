//! Budget-aware nonmyopic selection.
//!
//! The score of a candidate `x` with `m` queries left after it is
//!
//! ```text
//! score(x) = p(x) + p(x) * S1 + (1 - p(x)) * S0
//! ```
//!
//! where `S_y` is the sum of the `m` largest probabilities over the rest of
//! the pool after conditioning on `(x, y)`. The expectation term rewards
//! points that lift the top of the posterior, and it shrinks as the budget
//! drains: the final query degenerates to plain greedy selection.
//!
//! Because conditioning only moves the probabilities of `affected_set(x)`,
//! both `S_y` values come from a single delta query against the top-sum
//! index, and an optimistic upper bound (every affectable probability set to
//! 1) supports lazy-evaluation pruning of the candidate sweep.

use crate::model::KnnModel;
use crate::topsum::TopSumIndex;

/// A scored candidate.
#[derive(Debug, Clone)]
pub struct EnsEvaluation {
    pub point: usize,
    /// p(x), the expected immediate reward.
    pub immediate: f64,
    /// The expectation term: expected top-m probability sum after observing x.
    pub future_expected: f64,
    pub score: f64,
    /// True for fully evaluated candidates, false for bound-only entries.
    pub exact: bool,
}

/// How much of the candidate sweep the pruning rule skipped.
#[derive(Debug, Clone, Copy)]
pub struct PruningStats {
    pub candidates_total: usize,
    pub candidates_evaluated: usize,
}

impl PruningStats {
    pub fn fraction_pruned(&self) -> f64 {
        if self.candidates_total == 0 {
            0.0
        } else {
            1.0 - self.candidates_evaluated as f64 / self.candidates_total as f64
        }
    }
}

/// Relative inflation applied to the upper bound so floating-point rounding
/// can never push it below the exact score it must dominate.
const BOUND_SLACK: f64 = 1e-12;

/// Exact score of candidate `x` given `remaining >= 1` queries
/// (so `m = remaining - 1` after this one). The model is restored before
/// returning.
pub fn ens_score(
    model: &mut KnnModel,
    index: &TopSumIndex,
    remaining: usize,
    x: usize,
) -> EnsEvaluation {
    assert!(remaining >= 1, "ens_score needs remaining budget");
    let p = model.probability(x);
    let m = remaining - 1;
    if m == 0 {
        return EnsEvaluation {
            point: x,
            immediate: p,
            future_expected: 0.0,
            score: p,
            exact: true,
        };
    }
    let affected = model.affected_set(x);
    let mut removals = Vec::with_capacity(affected.len() + 1);
    removals.push(x);
    removals.extend_from_slice(&affected);

    let mut branch_sum = [0.0f64; 2];
    for (slot, y) in [(0usize, false), (1usize, true)] {
        let cp = model.condition(x, y).expect("candidate is unlabeled");
        let insertions: Vec<(usize, f64)> = affected
            .iter()
            .map(|&z| (z, model.probability(z)))
            .collect();
        branch_sum[slot] = index
            .top_sum_with_deltas(m, &removals, &insertions)
            .expect("removals are indexed and insertions were just removed");
        model.rollback(cp).expect("nested rollback is LIFO");
    }
    let future = p * branch_sum[1] + (1.0 - p) * branch_sum[0];
    EnsEvaluation {
        point: x,
        immediate: p,
        future_expected: future,
        score: p + future,
        exact: true,
    }
}

/// Upper bound on [`ens_score`] computable without conditioning: every
/// affectable probability is optimistically set to 1 before the top-m sum.
/// Conditioning can only move those probabilities within (0,1), so the bound
/// dominates both label branches.
pub fn ens_upper_bound(model: &KnnModel, index: &TopSumIndex, remaining: usize, x: usize) -> f64 {
    assert!(remaining >= 1);
    let p = model.probability(x);
    let m = remaining - 1;
    if m == 0 {
        return p * (1.0 + BOUND_SLACK);
    }
    let affected = model.affected_set(x);
    let mut removals = Vec::with_capacity(affected.len() + 1);
    removals.push(x);
    removals.extend_from_slice(&affected);
    let insertions: Vec<(usize, f64)> = affected.iter().map(|&z| (z, 1.0)).collect();
    let optimistic = index
        .top_sum_with_deltas(m, &removals, &insertions)
        .expect("removals are indexed and insertions were just removed");
    (p + optimistic) * (1.0 + BOUND_SLACK)
}

/// Picks the unlabeled point maximizing [`ens_score`] (ties by ascending id).
///
/// With `pruning` on, candidates are processed in descending bound order and
/// evaluation stops as soon as the incumbent beats every remaining bound
/// (respecting the id tie-break); the returned stats record the skipped
/// fraction. With `pruning` off every candidate is evaluated. Both modes
/// return the identical selection.
pub fn ens_select(
    model: &mut KnnModel,
    index: &TopSumIndex,
    remaining: usize,
    pruning: bool,
) -> Option<(EnsEvaluation, PruningStats)> {
    let candidates: Vec<usize> = model.unlabeled().collect();
    let total = candidates.len();
    if total == 0 {
        return None;
    }

    if !pruning {
        let mut best: Option<EnsEvaluation> = None;
        for &x in &candidates {
            let eval = ens_score(model, index, remaining, x);
            if best.as_ref().is_none_or(|b| eval.score > b.score) {
                best = Some(eval);
            }
        }
        return Some((
            best.expect("pool is nonempty"),
            PruningStats {
                candidates_total: total,
                candidates_evaluated: total,
            },
        ));
    }

    let mut bounds: Vec<(f64, usize)> = candidates
        .iter()
        .map(|&x| (ens_upper_bound(model, index, remaining, x), x))
        .collect();
    bounds.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));

    let mut evaluated = 0usize;
    let mut best: Option<EnsEvaluation> = None;
    for &(bound, x) in &bounds {
        if let Some(b) = &best {
            // Every later candidate has a bound <= this one (with larger id
            // on equality), so once the incumbent wins here it wins the rest.
            if b.score > bound || (b.score == bound && b.point < x) {
                break;
            }
        }
        let eval = ens_score(model, index, remaining, x);
        evaluated += 1;
        let better = match &best {
            None => true,
            Some(b) => eval.score > b.score || (eval.score == b.score && eval.point < b.point),
        };
        if better {
            best = Some(eval);
        }
    }

    Some((
        best.expect("at least one candidate evaluated"),
        PruningStats {
            candidates_total: total,
            candidates_evaluated: evaluated,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_knn_graph, Metric, NeighborGraph};
    use crate::policy::myopic::one_step_select;
    use crate::Dataset;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_model(rng: &mut ChaCha8Rng, n: usize, k: usize) -> KnnModel {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let ds = Dataset::dense("r", 2, rows, vec![false; n]).unwrap();
        let g = build_knn_graph(&ds, k, Metric::EuclideanUnit).unwrap();
        let mut m = KnnModel::new(Arc::new(g), 1.0, 0.2).unwrap();
        // Random observation history.
        let labels = rng.random_range(0..n / 2);
        for _ in 0..labels {
            let pool: Vec<usize> = m.unlabeled().collect();
            let x = pool[rng.random_range(0..pool.len())];
            m.condition(x, rng.random_bool(0.4)).unwrap();
        }
        m
    }

    /// Naive oracle: condition, re-sort the whole pool, sum the top m.
    fn naive_ens_score(model: &mut KnnModel, remaining: usize, x: usize) -> f64 {
        let p = model.probability(x);
        let m = remaining - 1;
        if m == 0 {
            return p;
        }
        let mut branch = [0.0f64; 2];
        for (slot, y) in [(0usize, false), (1usize, true)] {
            let cp = model.condition(x, y).unwrap();
            let mut probs: Vec<f64> = model.unlabeled().map(|z| model.probability(z)).collect();
            probs.sort_by(|a, b| b.partial_cmp(a).unwrap());
            branch[slot] = probs.iter().take(m).sum();
            model.rollback(cp).unwrap();
        }
        p + p * branch[1] + (1.0 - p) * branch[0]
    }

    #[test]
    fn last_query_score_is_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model = random_model(&mut rng, 12, 3);
        let index = TopSumIndex::from_model(&model);
        let x = model.unlabeled().next().unwrap();
        let eval = ens_score(&mut model, &index, 1, x);
        assert_eq!(eval.score, model.probability(x));
        assert_eq!(eval.future_expected, 0.0);
    }

    #[test]
    fn isolated_candidate_example() {
        // Pool probabilities {0.9, 0.5, 0.2}; x is the 0.5 point with no
        // reverse neighbors; m = 1 so S0 = S1 = 0.9 and score = 1.4.
        let forward = vec![vec![(2, 0.0)], vec![(2, 0.0)], vec![(0, 0.0)]];
        let g = NeighborGraph::from_forward(1, forward).unwrap();
        let mut model = KnnModel::new(Arc::new(g), 1.0, 0.5).unwrap();
        let index = TopSumIndex::build(vec![(0, 0.9), (1, 0.5), (2, 0.2)]).unwrap();
        let eval = ens_score(&mut model, &index, 2, 1);
        assert!((eval.score - 1.4).abs() < 1e-12, "{}", eval.score);
    }

    #[test]
    fn matches_naive_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mut model = random_model(&mut rng, 8, 2);
            let index = TopSumIndex::from_model(&model);
            let remaining = rng.random_range(1..=4);
            for x in model.unlabeled().collect::<Vec<_>>() {
                let fast = ens_score(&mut model, &index, remaining, x).score;
                let slow = naive_ens_score(&mut model, remaining, x);
                assert!((fast - slow).abs() < 1e-12, "x={x}: {fast} vs {slow}");
            }
        }
    }

    #[test]
    fn bound_dominates_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let mut model = random_model(&mut rng, 20, 4);
            let index = TopSumIndex::from_model(&model);
            let remaining = rng.random_range(1..=6);
            for x in model.unlabeled().collect::<Vec<_>>() {
                let u = ens_upper_bound(&model, &index, remaining, x);
                let s = ens_score(&mut model, &index, remaining, x).score;
                assert!(u >= s, "bound {u} below score {s} for x={x}");
            }
        }
    }

    #[test]
    fn bound_is_tight_for_isolated_candidates() {
        let forward = vec![vec![(2, 0.0)], vec![(2, 0.0)], vec![(0, 0.0)]];
        let g = NeighborGraph::from_forward(1, forward).unwrap();
        let mut model = KnnModel::new(Arc::new(g), 1.0, 0.5).unwrap();
        let index = TopSumIndex::build(vec![(0, 0.9), (1, 0.5), (2, 0.2)]).unwrap();
        let u = ens_upper_bound(&model, &index, 2, 1);
        let s = ens_score(&mut model, &index, 2, 1).score;
        assert!(u >= s && (u - s) <= s * 4.0 * BOUND_SLACK, "u={u}, s={s}");
    }

    #[test]
    fn pruned_and_exhaustive_selection_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..40 {
            let mut model = random_model(&mut rng, 30, 5);
            let index = TopSumIndex::from_model(&model);
            let remaining = rng.random_range(1..=8);
            let (pruned, pstats) = ens_select(&mut model, &index, remaining, true).unwrap();
            let (full, fstats) = ens_select(&mut model, &index, remaining, false).unwrap();
            assert_eq!(pruned.point, full.point, "trial {trial}");
            assert!((pruned.score - full.score).abs() <= 1e-12);
            assert_eq!(fstats.candidates_evaluated, fstats.candidates_total);
            assert!(pstats.candidates_evaluated <= pstats.candidates_total);
        }
    }

    #[test]
    fn final_query_equals_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let mut model = random_model(&mut rng, 25, 4);
            let index = TopSumIndex::from_model(&model);
            let (eval, _) = ens_select(&mut model, &index, 1, true).unwrap();
            let (greedy, _) = one_step_select(&index).unwrap();
            assert_eq!(eval.point, greedy);
        }
    }

    #[test]
    fn score_stays_within_bound_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut model = random_model(&mut rng, 20, 4);
        let index = TopSumIndex::from_model(&model);
        for remaining in 1..=5 {
            for x in model.unlabeled().collect::<Vec<_>>() {
                let eval = ens_score(&mut model, &index, remaining, x);
                let m = (remaining - 1) as f64;
                assert!(eval.score > 0.0 && eval.score <= 1.0 + m + 1e-12);
                assert!(eval.future_expected >= 0.0 && eval.future_expected <= m + 1e-12);
            }
        }
    }
}
