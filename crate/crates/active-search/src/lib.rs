//! Budgeted active search over a finite pool of points.
//!
//! The library provides the pieces needed to run label-efficient target
//! discovery: a k-NN posterior model with cheap incremental conditioning and
//! rollback ([`model::KnnModel`]), an order-statistic index answering
//! top-m probability sums under hypothetical edits ([`topsum::TopSumIndex`]),
//! a family of selection policies from one-step greedy to budget-aware
//! nonmyopic search with pruning ([`policy`]), batch construction via
//! sequential simulation and Monte Carlo greedy batches, and a brute-force
//! oracle for tiny instances used to validate the policies ([`oracle`]).

pub mod dataset;
pub mod graph;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod posterior;
pub mod rng;
pub mod state;
pub mod topsum;

pub use dataset::{Dataset, FeatureKind};
pub use graph::{build_knn_graph, jaccard_similarity, Metric, NeighborGraph};
pub use model::KnnModel;
pub use posterior::Posterior;
pub use state::SearchState;
pub use topsum::TopSumIndex;
