//! Stratified-sample classification baseline.
//!
//! Labels a stratified random sample of the pool up front (preserving the
//! target prevalence exactly, rounded), fits the same k-NN model, then
//! queries the top-`budget` posterior points among the rest in one shot.
//! This is the "spend a big labeling budget on a classifier" reference the
//! active policies are compared against.

use std::sync::Arc;

use active_search::policy::greedy_batch_select;
use active_search::rng::derive_rng;
use active_search::{build_knn_graph, Dataset, KnnModel, Metric, Posterior};
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::HarnessError;

#[derive(Debug, Clone, Serialize)]
pub struct StratifiedOutcome {
    pub sample_size: usize,
    pub sample_targets: usize,
    pub queried: Vec<usize>,
    pub targets_found: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn stratified_baseline(
    dataset: &Dataset,
    metric: Metric,
    k: usize,
    gamma: f64,
    prior: f64,
    sample_fraction: f64,
    budget: usize,
    seed: u64,
) -> Result<StratifiedOutcome, HarnessError> {
    if !(sample_fraction > 0.0 && sample_fraction < 1.0) {
        return Err(HarnessError::config("sample fraction must lie in (0,1)"));
    }
    let positives: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.truth()[i]).collect();
    let negatives: Vec<usize> = (0..dataset.len())
        .filter(|&i| !dataset.truth()[i])
        .collect();
    let n_pos = ((positives.len() as f64) * sample_fraction).round() as usize;
    let n_neg = ((negatives.len() as f64) * sample_fraction).round() as usize;

    let mut rng = derive_rng(seed, 0, "stratified-sample");
    let mut pos_pool = positives.clone();
    let mut neg_pool = negatives.clone();
    pos_pool.shuffle(&mut rng);
    neg_pool.shuffle(&mut rng);
    let sample: Vec<usize> = pos_pool[..n_pos]
        .iter()
        .chain(&neg_pool[..n_neg])
        .copied()
        .collect();

    let graph = build_knn_graph(dataset, k, metric).map_err(HarnessError::data)?;
    let model = KnnModel::new(Arc::new(graph), gamma, prior).map_err(HarnessError::config)?;
    let mut post = Posterior::new(model);
    for &x in &sample {
        post.commit(x, dataset.truth()[x])
            .map_err(HarnessError::data)?;
    }

    let budget = budget.min(post.unlabeled_count());
    let queried = greedy_batch_select(post.index(), budget).map_err(HarnessError::data)?;
    let targets_found = queried.iter().filter(|&&x| dataset.truth()[x]).count();
    Ok(StratifiedOutcome {
        sample_size: sample.len(),
        sample_targets: n_pos,
        queried,
        targets_found,
    })
}
