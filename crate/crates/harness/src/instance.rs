//! Synthetic instance generators.

use active_search::rng::derive_rng;
use active_search::Dataset;
use rand::Rng;

/// The toy problem: `n` points iid uniform on the unit square; a point is a
/// target iff it lies within Euclidean distance 1/4 of the center or of any
/// corner. The instance is regenerated (continuing the same stream) in the
/// vanishingly unlikely event that the point closest to the center is not a
/// target, so the closest-to-center seed rule always starts on a target.
pub fn generate_toy_instance(seed: u64, n: usize) -> Dataset {
    let mut rng = derive_rng(seed, 0, "toy-data");
    loop {
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let truth: Vec<bool> = points.iter().map(|&(x, y)| is_toy_target(x, y)).collect();
        let closest = closest_to_center(&points);
        if truth[closest] {
            let rows = points.into_iter().map(|(x, y)| vec![x, y]).collect();
            return Dataset::dense(format!("toy-{seed}"), 2, rows, truth)
                .expect("generated rows are well formed");
        }
    }
}

pub fn is_toy_target(x: f64, y: f64) -> bool {
    const R2: f64 = 0.25 * 0.25;
    let centers = [(0.5, 0.5), (0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)];
    centers.iter().any(|&(cx, cy)| {
        let (dx, dy) = (x - cx, y - cy);
        dx * dx + dy * dy <= R2
    })
}

fn closest_to_center(points: &[(f64, f64)]) -> usize {
    let mut best = (f64::INFINITY, 0usize);
    for (i, &(x, y)) in points.iter().enumerate() {
        let d2 = (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5);
        if d2 < best.0 {
            best = (d2, i);
        }
    }
    best.1
}

/// Clustered synthetic instance: `n` uniform points on the unit square,
/// targets within `radius` of any of `clusters` random disc centers (drawn
/// in [0.1, 0.9]^2 so the discs mostly stay inside). Regenerates until at
/// least one target exists.
pub fn generate_cluster_instance(seed: u64, n: usize, clusters: usize, radius: f64) -> Dataset {
    let mut rng = derive_rng(seed, 0, "cluster-data");
    let r2 = radius * radius;
    loop {
        let centers: Vec<(f64, f64)> = (0..clusters)
            .map(|_| (rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)))
            .collect();
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let truth: Vec<bool> = points
            .iter()
            .map(|&(x, y)| {
                centers.iter().any(|&(cx, cy)| {
                    let (dx, dy) = (x - cx, y - cy);
                    dx * dx + dy * dy <= r2
                })
            })
            .collect();
        if truth.iter().any(|&t| t) {
            let rows = points.into_iter().map(|(x, y)| vec![x, y]).collect();
            return Dataset::dense(
                format!("clusters-{seed}-c{clusters}-r{radius}"),
                2,
                rows,
                truth,
            )
            .expect("generated rows are well formed");
        }
    }
}
