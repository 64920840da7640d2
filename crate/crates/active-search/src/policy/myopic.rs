//! Myopic baselines: one-step greedy, two-step lookahead, greedy-batch, and
//! the uncertain-greedy batch heuristic.

use crate::model::KnnModel;
use crate::policy::PolicyError;
use crate::topsum::TopSumIndex;

/// The unlabeled point with the highest posterior probability
/// (ties by ascending id). `None` on an empty pool.
pub fn one_step_select(index: &TopSumIndex) -> Option<(usize, f64)> {
    index.max_excluding(&[])
}

/// The `b` unlabeled points of largest probability, ordered descending
/// (ties by ascending id).
pub fn greedy_batch_select(index: &TopSumIndex, b: usize) -> Result<Vec<usize>, PolicyError> {
    if index.len() < b {
        return Err(PolicyError::PoolTooSmall {
            need: b,
            have: index.len(),
        });
    }
    Ok(index.top_entries(b).into_iter().map(|(id, _)| id).collect())
}

/// Two-step lookahead score of candidate `x`:
///
/// ```text
/// p(x) + p(x) * M1 + (1 - p(x)) * M0
/// ```
///
/// where `M_y` is the maximum posterior probability over the remaining
/// unlabeled points after conditioning on `(x, y)`. The lookahead term is
/// dropped when `x` would be the final query. The model is restored before
/// returning.
pub fn two_step_score(
    model: &mut KnnModel,
    index: &TopSumIndex,
    remaining: usize,
    x: usize,
) -> f64 {
    let p = model.probability(x);
    if remaining <= 1 {
        return p;
    }
    let affected = model.affected_set(x);
    let mut excluded = Vec::with_capacity(affected.len() + 1);
    excluded.push(x);
    excluded.extend_from_slice(&affected);
    let unaffected_max = index.max_excluding(&excluded).map_or(0.0, |(_, p)| p);

    let mut branch_max = [0.0f64; 2];
    for (slot, y) in [(0usize, false), (1usize, true)] {
        let cp = model.condition(x, y).expect("candidate is unlabeled");
        let mut best = unaffected_max;
        for &z in &affected {
            best = best.max(model.probability(z));
        }
        branch_max[slot] = best;
        model.rollback(cp).expect("nested rollback is LIFO");
    }
    p + (p * branch_max[1] + (1.0 - p) * branch_max[0])
}

/// Argmax of [`two_step_score`] over the unlabeled pool
/// (ties by ascending id). `None` on an empty pool.
pub fn two_step_select(
    model: &mut KnnModel,
    index: &TopSumIndex,
    remaining: usize,
) -> Option<usize> {
    let candidates: Vec<usize> = model.unlabeled().collect();
    let mut best: Option<(f64, usize)> = None;
    for x in candidates {
        let score = two_step_score(model, index, remaining, x);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, x));
        }
    }
    best.map(|(_, x)| x)
}

/// Uncertain-greedy batch: `ceil(r * b)` points minimizing `|p - 0.5|`
/// (ties: higher probability first, then ascending id), then the
/// highest-probability points among the rest.
pub fn ugb_select(index: &TopSumIndex, b: usize, ratio: f64) -> Result<Vec<usize>, PolicyError> {
    debug_assert!(ratio > 0.0 && ratio < 1.0);
    if index.len() < b {
        return Err(PolicyError::PoolTooSmall {
            need: b,
            have: index.len(),
        });
    }
    let uncertain_count = ((ratio * b as f64).ceil() as usize).clamp(1, b);

    let mut by_uncertainty: Vec<(usize, f64)> = index.iter_desc().collect();
    by_uncertainty.sort_by(|a, b| {
        let ua = (a.1 - 0.5).abs();
        let ub = (b.1 - 0.5).abs();
        ua.partial_cmp(&ub)
            .unwrap()
            .then(b.1.partial_cmp(&a.1).unwrap())
            .then(a.0.cmp(&b.0))
    });
    let mut batch: Vec<usize> = by_uncertainty
        .iter()
        .take(uncertain_count)
        .map(|&(id, _)| id)
        .collect();

    for (id, _) in index.iter_desc() {
        if batch.len() == b {
            break;
        }
        if !batch[..uncertain_count].contains(&id) {
            batch.push(id);
        }
    }
    Ok(batch)
}
