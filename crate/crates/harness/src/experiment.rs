//! Seeded policy runs over replications.

use std::sync::Arc;
use std::time::Instant;

use active_search::policy::Policy;
use active_search::rng::{derive_rng, derive_seed};
use active_search::{
    build_knn_graph, Dataset, KnnModel, Metric, NeighborGraph, Posterior, SearchState,
};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetSource, ExperimentConfig, FileFormat, SeedRule};
use crate::instance::{generate_cluster_instance, generate_toy_instance};
use crate::HarnessError;

/// One labeled query. `iteration` is the batch index; batch-level values
/// (pruned fraction, wall time) repeat on every row of the batch. Wall time
/// is kept out of the CSV so identical configs produce byte-identical files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub replication: usize,
    pub iteration: usize,
    pub query_index: usize,
    pub point_id: usize,
    pub probability: f64,
    pub label: u8,
    pub cumulative_targets: usize,
    pub pruned_fraction: Option<f64>,
    #[serde(skip)]
    pub iteration_wall_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub terminal_targets: Vec<usize>,
    pub mean_terminal_targets: f64,
    pub sd_terminal_targets: f64,
    pub mean_pruned_fraction: Option<f64>,
    pub mean_iteration_wall_ms: f64,
    pub total_wall_s: f64,
}

#[derive(Debug)]
pub struct RunOutput {
    pub records: Vec<ExperimentRecord>,
    pub summary: RunSummary,
    /// The final replication's dataset, for coordinate emission.
    pub dataset: Arc<Dataset>,
}

/// Runs every replication of the configured experiment. Replications run in
/// parallel on independent streams derived from `(base_seed, replication)`;
/// the output is a pure function of the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    let resolved = cfg.validate()?;
    let started = Instant::now();

    // File-backed datasets and their graphs are shared across replications;
    // generated instances are drawn fresh per replication.
    let shared: Option<(Arc<Dataset>, Arc<NeighborGraph>)> = match &cfg.dataset {
        DatasetSource::File { path, format } => {
            let ds = match format {
                FileFormat::DenseCsv => Dataset::load_dense_csv(path),
                FileFormat::SparseFingerprint => Dataset::load_sparse(path),
            }
            .map_err(HarnessError::data)?;
            let graph = build_knn_graph(&ds, cfg.k, resolved.metric).map_err(HarnessError::data)?;
            Some((Arc::new(ds), Arc::new(graph)))
        }
        _ => None,
    };

    let mut results: Vec<(usize, Arc<Dataset>, Vec<ExperimentRecord>)> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            run_replication(cfg, resolved.metric, rep, shared.clone())
                .map(|(ds, recs)| (rep, ds, recs))
        })
        .collect::<Result<_, _>>()?;
    results.sort_by_key(|&(rep, _, _)| rep);

    let dataset = results.last().expect("at least one replication").1.clone();
    let records: Vec<ExperimentRecord> =
        results.into_iter().flat_map(|(_, _, recs)| recs).collect();

    let terminal: Vec<usize> = (0..cfg.replications)
        .map(|rep| {
            records
                .iter()
                .filter(|r| r.replication == rep)
                .map(|r| r.cumulative_targets)
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mean = terminal.iter().sum::<usize>() as f64 / terminal.len() as f64;
    let sd = if terminal.len() > 1 {
        (terminal
            .iter()
            .map(|&t| (t as f64 - mean).powi(2))
            .sum::<f64>()
            / (terminal.len() - 1) as f64)
            .sqrt()
    } else {
        0.0
    };
    let pruned: Vec<f64> = records.iter().filter_map(|r| r.pruned_fraction).collect();
    let mean_pruned =
        (!pruned.is_empty()).then(|| pruned.iter().sum::<f64>() / pruned.len() as f64);
    let mean_wall =
        records.iter().map(|r| r.iteration_wall_ms).sum::<f64>() / records.len().max(1) as f64;

    let summary = RunSummary {
        config: cfg.clone(),
        terminal_targets: terminal,
        mean_terminal_targets: mean,
        sd_terminal_targets: sd,
        mean_pruned_fraction: mean_pruned,
        mean_iteration_wall_ms: mean_wall,
        total_wall_s: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        records,
        summary,
        dataset,
    })
}

fn run_replication(
    cfg: &ExperimentConfig,
    metric: Metric,
    rep: usize,
    shared: Option<(Arc<Dataset>, Arc<NeighborGraph>)>,
) -> Result<(Arc<Dataset>, Vec<ExperimentRecord>), HarnessError> {
    let rep_seed = derive_seed(cfg.base_seed, rep as u64, "replication");
    let (dataset, graph) = match (&cfg.dataset, shared) {
        (_, Some((ds, graph))) => (ds, graph),
        (DatasetSource::Toy { n }, None) => {
            let ds = generate_toy_instance(rep_seed, *n);
            let graph = build_knn_graph(&ds, cfg.k, metric).map_err(HarnessError::data)?;
            (Arc::new(ds), Arc::new(graph))
        }
        (
            DatasetSource::Synthetic {
                n,
                clusters,
                radius,
            },
            None,
        ) => {
            let ds = generate_cluster_instance(rep_seed, *n, *clusters, *radius);
            let graph = build_knn_graph(&ds, cfg.k, metric).map_err(HarnessError::data)?;
            (Arc::new(ds), Arc::new(graph))
        }
        (DatasetSource::File { .. }, None) => unreachable!("file datasets are pre-loaded"),
    };

    let model = KnnModel::new(graph, cfg.gamma, cfg.prior).map_err(HarnessError::config)?;
    let mut post = Posterior::new(model);

    let seed_point = initial_seed_point(cfg, &dataset, rep)?;
    post.commit(seed_point, dataset.truth()[seed_point])
        .map_err(HarnessError::data)?;

    let spec = cfg.policy.parse().map_err(HarnessError::config)?;
    let mut policy = Policy::new(spec, derive_seed(cfg.base_seed, rep as u64, "policy"));
    let mut state = SearchState::new(cfg.budget, cfg.batch_size).map_err(HarnessError::config)?;

    let mut records = Vec::with_capacity(cfg.budget);
    let mut cumulative = 0usize;
    let mut query_index = 0usize;
    let mut iteration = 0usize;
    while !state.is_exhausted() {
        iteration += 1;
        let t0 = Instant::now();
        let selection = policy
            .select_batch(&mut post, &state)
            .map_err(HarnessError::data)?;
        let wall_ms = t0.elapsed().as_secs_f64() * 1e3;

        // Probabilities at selection, before any of the batch is revealed.
        let probs: Vec<f64> = selection
            .points
            .iter()
            .map(|&x| post.probability(x))
            .collect();
        let pairs: Vec<(usize, bool)> = selection
            .points
            .iter()
            .map(|&x| (x, dataset.truth()[x]))
            .collect();
        for &(x, y) in &pairs {
            post.commit(x, y).map_err(HarnessError::data)?;
        }
        state.record_batch(&pairs).map_err(HarnessError::data)?;

        let pruned_fraction = selection.pruning.map(|s| s.fraction_pruned());
        for (i, &(x, y)) in pairs.iter().enumerate() {
            query_index += 1;
            cumulative += y as usize;
            records.push(ExperimentRecord {
                replication: rep,
                iteration,
                query_index,
                point_id: x,
                probability: probs[i],
                label: y as u8,
                cumulative_targets: cumulative,
                pruned_fraction,
                iteration_wall_ms: wall_ms,
            });
        }
    }
    Ok((dataset, records))
}

fn initial_seed_point(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    rep: usize,
) -> Result<usize, HarnessError> {
    match cfg.seed_rule {
        SeedRule::ClosestToCenter => {
            let dim = dataset
                .dim()
                .ok_or_else(|| HarnessError::config("closest-to-center needs dense features"))?;
            let mut best = (f64::INFINITY, 0usize);
            for i in 0..dataset.len() {
                let d2: f64 = dataset
                    .dense_row(i)
                    .iter()
                    .take(dim)
                    .map(|v| (v - 0.5) * (v - 0.5))
                    .sum();
                if d2 < best.0 {
                    best = (d2, i);
                }
            }
            Ok(best.1)
        }
        SeedRule::RandomTarget => {
            let targets: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.truth()[i]).collect();
            if targets.is_empty() {
                return Err(HarnessError::data(format!(
                    "dataset {} has no targets to seed from",
                    dataset.name()
                )));
            }
            let mut rng = derive_rng(cfg.base_seed, rep as u64, "seed-pick");
            Ok(targets[rng.random_range(0..targets.len())])
        }
    }
}
