//! Shared instance builders for the integration suites.

use std::sync::Arc;

use active_search::{build_knn_graph, Dataset, KnnModel, Metric};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_dense_dataset(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    let truth: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
    Dataset::dense("random-dense", dim, rows, truth).unwrap()
}

pub fn random_sparse_dataset(rng: &mut ChaCha8Rng, n: usize, universe: u32) -> Dataset {
    let fps: Vec<Vec<u32>> = (0..n)
        .map(|_| {
            let mut fp: Vec<u32> = (0..universe).filter(|_| rng.random_bool(0.25)).collect();
            if fp.is_empty() {
                fp.push(rng.random_range(0..universe));
            }
            fp
        })
        .collect();
    let truth: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
    Dataset::sparse("random-sparse", fps, truth).unwrap()
}

/// A model over a random dataset with a random observation history.
pub fn random_model(
    rng: &mut ChaCha8Rng,
    n: usize,
    k: usize,
    metric: Metric,
    observations: usize,
) -> KnnModel {
    let ds = match metric {
        Metric::EuclideanUnit => random_dense_dataset(rng, n, 2),
        Metric::JaccardWeighted => random_sparse_dataset(rng, n, 24),
    };
    let graph = build_knn_graph(&ds, k, metric).unwrap();
    let mut model = KnnModel::new(Arc::new(graph), 1.0, rng.random_range(0.05..0.4)).unwrap();
    for _ in 0..observations {
        let pool: Vec<usize> = model.unlabeled().collect();
        if pool.len() <= 1 {
            break;
        }
        let x = pool[rng.random_range(0..pool.len())];
        let y = rng.random_bool(0.3);
        model.condition(x, y).unwrap();
    }
    model
}
