//! k-nearest-neighbor graph construction and storage.
//!
//! The graph is directed: `forward[i]` holds the k nearest neighbors of `i`
//! (exact, by full scan), and `reverse[x]` lists every point whose forward
//! list contains `x`, together with the edge weight. The reverse lists are
//! what makes conditioning local: observing `x` can only move the
//! probabilities of `reverse[x]`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{Dataset, FeatureKind};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("k must be at least 1")]
    KTooSmall,
    #[error("k = {k} must be smaller than the pool size n = {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("metric {metric} requires {required:?} features, dataset is {got:?}")]
    MetricMismatch {
        metric: Metric,
        required: FeatureKind,
        got: FeatureKind,
    },
    #[error("point {id}: forward list has {got} entries, expected {expected}")]
    ForwardLength {
        id: usize,
        got: usize,
        expected: usize,
    },
    #[error("point {id}: self edge")]
    SelfEdge { id: usize },
    #[error("point {id}: duplicate neighbor {neighbor}")]
    DuplicateNeighbor { id: usize, neighbor: usize },
    #[error("point {id}: neighbor {neighbor} out of range")]
    NeighborOutOfRange { id: usize, neighbor: usize },
    #[error("point {id}: edge weight must be finite and nonnegative")]
    BadWeight { id: usize },
    #[error("unknown metric `{0}` (expected `euclidean-unit` or `jaccard-weighted`)")]
    UnknownMetric(String),
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Jaccard index |a ∩ b| / |a ∪ b| of two sorted index sets.
/// Returns 0 when both sets are empty.
pub fn jaccard_similarity(a: &[u32], b: &[u32]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let mut inter = 0usize;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Neighbor metric. `EuclideanUnit` ranks by Euclidean distance and weights
/// every edge 1; `JaccardWeighted` ranks by Jaccard similarity and uses the
/// similarity itself as the edge weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    EuclideanUnit,
    JaccardWeighted,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::EuclideanUnit => "euclidean-unit",
            Metric::JaccardWeighted => "jaccard-weighted",
        }
    }

    fn required_kind(&self) -> FeatureKind {
        match self {
            Metric::EuclideanUnit => FeatureKind::Dense,
            Metric::JaccardWeighted => FeatureKind::Sparse,
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, GraphError> {
        match s {
            "euclidean-unit" => Ok(Metric::EuclideanUnit),
            "jaccard-weighted" => Ok(Metric::JaccardWeighted),
            other => Err(GraphError::UnknownMetric(other.to_string())),
        }
    }
}

/// Directed k-NN structure with forward adjacency and its exact transpose.
#[derive(Debug, Clone)]
pub struct NeighborGraph {
    k: usize,
    forward: Vec<Vec<(u32, f64)>>,
    reverse: Vec<Vec<(u32, f64)>>,
}

impl NeighborGraph {
    /// Builds a graph from forward lists, deriving the reverse lists and
    /// validating the structural invariants. Each forward list must have
    /// exactly `min(k, n-1)` entries, no self edges, no duplicates, and
    /// finite nonnegative weights.
    pub fn from_forward(k: usize, forward: Vec<Vec<(u32, f64)>>) -> Result<Self, GraphError> {
        let n = forward.len();
        let expected = k.min(n.saturating_sub(1));
        let mut seen = vec![usize::MAX; n];
        for (id, list) in forward.iter().enumerate() {
            if list.len() != expected {
                return Err(GraphError::ForwardLength {
                    id,
                    got: list.len(),
                    expected,
                });
            }
            for &(nb, w) in list {
                let nb = nb as usize;
                if nb >= n {
                    return Err(GraphError::NeighborOutOfRange { id, neighbor: nb });
                }
                if nb == id {
                    return Err(GraphError::SelfEdge { id });
                }
                if seen[nb] == id {
                    return Err(GraphError::DuplicateNeighbor { id, neighbor: nb });
                }
                seen[nb] = id;
                if !w.is_finite() || w < 0.0 {
                    return Err(GraphError::BadWeight { id });
                }
            }
        }
        let mut reverse: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for (id, list) in forward.iter().enumerate() {
            for &(nb, w) in list {
                reverse[nb as usize].push((id as u32, w));
            }
        }
        Ok(Self {
            k,
            forward,
            reverse,
        })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// The k nearest neighbors of `id` as `(neighbor, weight)` pairs.
    pub fn forward(&self, id: usize) -> &[(u32, f64)] {
        &self.forward[id]
    }

    /// Points that list `id` among their neighbors, as `(owner, weight)`
    /// pairs where `weight` is the owner's edge weight towards `id`.
    pub fn reverse(&self, id: usize) -> &[(u32, f64)] {
        &self.reverse[id]
    }

    /// The weight of the edge `from -> to`, if present in `forward[from]`.
    pub fn edge_weight(&self, from: usize, to: usize) -> Option<f64> {
        self.forward[from]
            .iter()
            .find(|&&(nb, _)| nb as usize == to)
            .map(|&(_, w)| w)
    }

    /// Writes one `id: n1:w1 n2:w2 ...` line per point.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let mut out = String::new();
        for (id, list) in self.forward.iter().enumerate() {
            write!(out, "{id}:").unwrap();
            for &(nb, w) in list {
                write!(out, " {nb}:{w}").unwrap();
            }
            out.push('\n');
        }
        out.insert_str(0, &format!("# k={}\n", self.k));
        fs::write(path.as_ref(), out).map_err(|source| GraphError::Io {
            path: path.as_ref().display().to_string(),
            source,
        })
    }

    /// Loads a graph saved by [`NeighborGraph::save`] and re-validates the
    /// structural invariants, including transpose consistency.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let pstr = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: pstr.clone(),
            source,
        })?;
        let mut k: Option<usize> = None;
        let mut rows: Vec<Option<Vec<(u32, f64)>>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(kv) = rest.trim().strip_prefix("k=") {
                    k = Some(kv.trim().parse().map_err(|e| GraphError::Parse {
                        path: pstr.clone(),
                        msg: format!("line {}: {e}", lineno + 1),
                    })?);
                }
                continue;
            }
            let (id_part, rest) = line.split_once(':').ok_or_else(|| GraphError::Parse {
                path: pstr.clone(),
                msg: format!("line {}: expected `id: ...`", lineno + 1),
            })?;
            let id: usize = id_part.trim().parse().map_err(|e| GraphError::Parse {
                path: pstr.clone(),
                msg: format!("line {}: {e}", lineno + 1),
            })?;
            let mut list = Vec::new();
            for tok in rest.split_whitespace() {
                let (nb, w) = tok.split_once(':').ok_or_else(|| GraphError::Parse {
                    path: pstr.clone(),
                    msg: format!("line {}: expected `neighbor:weight`", lineno + 1),
                })?;
                let nb: u32 = nb.parse().map_err(|e| GraphError::Parse {
                    path: pstr.clone(),
                    msg: format!("line {}: {e}", lineno + 1),
                })?;
                let w: f64 = w.parse().map_err(|e| GraphError::Parse {
                    path: pstr.clone(),
                    msg: format!("line {}: {e}", lineno + 1),
                })?;
                list.push((nb, w));
            }
            if id >= rows.len() {
                rows.resize_with(id + 1, || None);
            }
            if rows[id].is_some() {
                return Err(GraphError::Parse {
                    path: pstr.clone(),
                    msg: format!("duplicate point id {id}"),
                });
            }
            rows[id] = Some(list);
        }
        let forward: Vec<Vec<(u32, f64)>> = rows
            .into_iter()
            .enumerate()
            .map(|(id, row)| {
                row.ok_or_else(|| GraphError::Parse {
                    path: pstr.clone(),
                    msg: format!("missing point id {id}"),
                })
            })
            .collect::<Result<_, _>>()?;
        let k = k.unwrap_or_else(|| forward.iter().map(Vec::len).max().unwrap_or(0));
        Self::from_forward(k, forward)
    }
}

/// Builds the exact k-NN graph of a dataset by full scan.
///
/// Neighbors are ranked by ascending Euclidean distance (weight 1 each) or
/// descending Jaccard similarity (weight = similarity); ties broken by
/// ascending point id, so the result is deterministic.
pub fn build_knn_graph(
    dataset: &Dataset,
    k: usize,
    metric: Metric,
) -> Result<NeighborGraph, GraphError> {
    if k == 0 {
        return Err(GraphError::KTooSmall);
    }
    let n = dataset.len();
    if k >= n {
        return Err(GraphError::KTooLarge { k, n });
    }
    if dataset.kind() != metric.required_kind() {
        return Err(GraphError::MetricMismatch {
            metric,
            required: metric.required_kind(),
            got: dataset.kind(),
        });
    }

    let forward: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            // Score so that smaller is better in both metrics, then the
            // shared (score, id) comparator gives the tie-break for free.
            let mut scored: Vec<(f64, u32)> = match metric {
                Metric::EuclideanUnit => {
                    let xi = dataset.dense_row(i);
                    (0..n)
                        .filter(|&j| j != i)
                        .map(|j| {
                            let xj = dataset.dense_row(j);
                            let d2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
                            (d2, j as u32)
                        })
                        .collect()
                }
                Metric::JaccardWeighted => {
                    let fi = dataset.sparse_row(i);
                    (0..n)
                        .filter(|&j| j != i)
                        .map(|j| (-jaccard_similarity(fi, dataset.sparse_row(j)), j as u32))
                        .collect()
                }
            };
            scored.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
            scored.truncate(k);
            scored.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            scored
                .into_iter()
                .map(|(score, id)| match metric {
                    Metric::EuclideanUnit => (id, 1.0),
                    Metric::JaccardWeighted => (id, -score),
                })
                .collect()
        })
        .collect();

    NeighborGraph::from_forward(k, forward)
}
