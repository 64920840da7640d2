//! Selection policies.
//!
//! A [`PolicySpec`] names a policy the way the CLI does (`one-step`,
//! `two-step`, `greedy-batch`, `ugb:<r>`, `ens`, `ss-<one|two|ens>-<s|m|0|1>`,
//! `batch-ens:<N>`); [`Policy`] is the runnable form holding whatever seeded
//! state the policy needs. All tie-breaking is by ascending point id, so runs
//! are reproducible.

pub mod batch;
pub mod ens;
pub mod myopic;

use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::ModelError;
use crate::posterior::Posterior;
use crate::rng::derive_rng;
use crate::state::SearchState;
use crate::topsum::TopSumError;

pub use batch::{
    batch_ens_objective_exact, batch_ens_objective_sampled, batch_ens_select,
    monotonicity_diagnostic, sample_joint_labels, sequential_simulation_batch, FictionalOracle,
    LabelSample, MonotonicityReport,
};
pub use ens::{ens_score, ens_select, ens_upper_bound, EnsEvaluation, PruningStats};
pub use myopic::{
    greedy_batch_select, one_step_select, two_step_score, two_step_select, ugb_select,
};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("no unlabeled points left to select from")]
    EmptyPool,
    #[error("batch of {need} requested but only {have} unlabeled points remain")]
    PoolTooSmall { need: usize, have: usize },
    #[error("batch of {batch} exceeds the remaining budget {remaining}")]
    BudgetTooSmall { batch: usize, remaining: usize },
    #[error("exact batch objective supports at most {max} points, got {got}")]
    BatchTooLarge { got: usize, max: usize },
    #[error("batch contains duplicate or labeled point {0}")]
    BadBatchPoint(usize),
    #[error("label sample does not cover the requested batch")]
    SampleMismatch,
    #[error("batch-ens needs at least one label sample")]
    NoSamples,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    TopSum(#[from] TopSumError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParsePolicyError {
    #[error("unknown policy `{0}`")]
    Unknown(String),
    #[error("ugb ratio must lie strictly inside (0,1): `{0}`")]
    BadRatio(String),
    #[error("batch-ens sample count must be a positive integer: `{0}`")]
    BadSampleCount(String),
    #[error("policy `{policy}` is sequential-only and requires batch size 1, got {batch}")]
    IncompatibleBatch { policy: String, batch: usize },
}

/// Inner sequential policy used by sequential simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerPolicy {
    OneStep,
    TwoStep,
    Ens,
}

impl InnerPolicy {
    fn code(&self) -> &'static str {
        match self {
            InnerPolicy::OneStep => "one",
            InnerPolicy::TwoStep => "two",
            InnerPolicy::Ens => "ens",
        }
    }
}

/// Fictional labeling rule used when simulating a batch sequentially.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    /// Draw the label from its marginal distribution.
    Sampling,
    /// Assume the most likely label (ties at p = 0.5 resolve to negative).
    MostLikely,
    /// Pessimistic: always negative.
    AlwaysNegative,
    /// Optimistic: always positive.
    AlwaysPositive,
}

impl OracleKind {
    fn code(&self) -> &'static str {
        match self {
            OracleKind::Sampling => "s",
            OracleKind::MostLikely => "m",
            OracleKind::AlwaysNegative => "0",
            OracleKind::AlwaysPositive => "1",
        }
    }
}

/// Parsed policy name plus its options.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    OneStep,
    TwoStep,
    GreedyBatch,
    Ugb {
        ratio: f64,
    },
    Ens,
    SequentialSimulation {
        inner: InnerPolicy,
        oracle: OracleKind,
    },
    BatchEns {
        samples: usize,
    },
}

impl PolicySpec {
    /// Checks the policy against a batch size; the plain sequential policies
    /// only make sense with `b = 1`.
    pub fn validate_batch_size(&self, batch: usize) -> Result<(), ParsePolicyError> {
        let sequential_only = matches!(
            self,
            PolicySpec::OneStep | PolicySpec::TwoStep | PolicySpec::Ens
        );
        if sequential_only && batch != 1 {
            return Err(ParsePolicyError::IncompatibleBatch {
                policy: self.to_string(),
                batch,
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicySpec::OneStep => write!(f, "one-step"),
            PolicySpec::TwoStep => write!(f, "two-step"),
            PolicySpec::GreedyBatch => write!(f, "greedy-batch"),
            PolicySpec::Ugb { ratio } => write!(f, "ugb:{ratio}"),
            PolicySpec::Ens => write!(f, "ens"),
            PolicySpec::SequentialSimulation { inner, oracle } => {
                write!(f, "ss-{}-{}", inner.code(), oracle.code())
            }
            PolicySpec::BatchEns { samples } => write!(f, "batch-ens:{samples}"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = ParsePolicyError;

    fn from_str(s: &str) -> Result<Self, ParsePolicyError> {
        match s {
            "one-step" => return Ok(PolicySpec::OneStep),
            "two-step" => return Ok(PolicySpec::TwoStep),
            "greedy-batch" => return Ok(PolicySpec::GreedyBatch),
            "ens" => return Ok(PolicySpec::Ens),
            _ => {}
        }
        if let Some(r) = s.strip_prefix("ugb:") {
            let ratio: f64 = r
                .parse()
                .map_err(|_| ParsePolicyError::BadRatio(r.to_string()))?;
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(ParsePolicyError::BadRatio(r.to_string()));
            }
            return Ok(PolicySpec::Ugb { ratio });
        }
        if let Some(n) = s.strip_prefix("batch-ens:") {
            let samples: usize = n
                .parse()
                .map_err(|_| ParsePolicyError::BadSampleCount(n.to_string()))?;
            if samples == 0 {
                return Err(ParsePolicyError::BadSampleCount(n.to_string()));
            }
            return Ok(PolicySpec::BatchEns { samples });
        }
        if let Some(rest) = s.strip_prefix("ss-") {
            let (inner, oracle) = rest
                .rsplit_once('-')
                .ok_or_else(|| ParsePolicyError::Unknown(s.to_string()))?;
            let inner = match inner {
                "one" => InnerPolicy::OneStep,
                "two" => InnerPolicy::TwoStep,
                "ens" => InnerPolicy::Ens,
                _ => return Err(ParsePolicyError::Unknown(s.to_string())),
            };
            let oracle = match oracle {
                "s" => OracleKind::Sampling,
                "m" => OracleKind::MostLikely,
                "0" => OracleKind::AlwaysNegative,
                "1" => OracleKind::AlwaysPositive,
                _ => return Err(ParsePolicyError::Unknown(s.to_string())),
            };
            return Ok(PolicySpec::SequentialSimulation { inner, oracle });
        }
        Err(ParsePolicyError::Unknown(s.to_string()))
    }
}

/// One selected batch plus ENS pruning stats when the policy produced them.
#[derive(Debug, Clone)]
pub struct Selection {
    pub points: Vec<usize>,
    pub pruning: Option<PruningStats>,
}

#[derive(Debug, Clone)]
enum Runtime {
    OneStep,
    TwoStep,
    GreedyBatch,
    Ugb {
        ratio: f64,
    },
    Ens,
    Ss {
        inner: InnerPolicy,
        oracle: FictionalOracle,
    },
    BatchEns {
        samples: usize,
        rng: ChaCha8Rng,
    },
}

/// A runnable policy: a [`PolicySpec`] plus any seeded per-run state.
#[derive(Debug, Clone)]
pub struct Policy {
    spec: PolicySpec,
    runtime: Runtime,
}

impl Policy {
    /// Instantiates a policy. `seed` feeds the policy's internal streams
    /// (fictional sampling oracles, Monte Carlo label samples); deterministic
    /// policies ignore it.
    pub fn new(spec: PolicySpec, seed: u64) -> Self {
        let runtime = match spec {
            PolicySpec::OneStep => Runtime::OneStep,
            PolicySpec::TwoStep => Runtime::TwoStep,
            PolicySpec::GreedyBatch => Runtime::GreedyBatch,
            PolicySpec::Ugb { ratio } => Runtime::Ugb { ratio },
            PolicySpec::Ens => Runtime::Ens,
            PolicySpec::SequentialSimulation { inner, oracle } => Runtime::Ss {
                inner,
                oracle: FictionalOracle::from_rng(oracle, derive_rng(seed, 0, "ss-oracle")),
            },
            PolicySpec::BatchEns { samples } => Runtime::BatchEns {
                samples,
                rng: derive_rng(seed, 0, "batch-ens"),
            },
        };
        Self { spec, runtime }
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    /// Selects the next batch of `state.next_batch_size()` points.
    pub fn select_batch(
        &mut self,
        post: &mut Posterior,
        state: &SearchState,
    ) -> Result<Selection, PolicyError> {
        let b = state.next_batch_size();
        if b == 0 {
            return Err(PolicyError::BudgetTooSmall {
                batch: 0,
                remaining: 0,
            });
        }
        if post.unlabeled_count() < b {
            return Err(PolicyError::PoolTooSmall {
                need: b,
                have: post.unlabeled_count(),
            });
        }
        match &mut self.runtime {
            Runtime::OneStep => {
                let (x, _) = one_step_select(post.index()).ok_or(PolicyError::EmptyPool)?;
                Ok(Selection {
                    points: vec![x],
                    pruning: None,
                })
            }
            Runtime::TwoStep => {
                let (model, index) = post.split_mut();
                let x = two_step_select(model, index, state.remaining())
                    .ok_or(PolicyError::EmptyPool)?;
                Ok(Selection {
                    points: vec![x],
                    pruning: None,
                })
            }
            Runtime::GreedyBatch => {
                let points = greedy_batch_select(post.index(), b)?;
                Ok(Selection {
                    points,
                    pruning: None,
                })
            }
            Runtime::Ugb { ratio } => {
                let points = ugb_select(post.index(), b, *ratio)?;
                Ok(Selection {
                    points,
                    pruning: None,
                })
            }
            Runtime::Ens => {
                let (model, index) = post.split_mut();
                let (eval, stats) = ens_select(model, index, state.remaining(), true)
                    .ok_or(PolicyError::EmptyPool)?;
                Ok(Selection {
                    points: vec![eval.point],
                    pruning: Some(stats),
                })
            }
            Runtime::Ss { inner, oracle } => {
                let points = sequential_simulation_batch(post, state, *inner, oracle, b)?;
                Ok(Selection {
                    points,
                    pruning: None,
                })
            }
            Runtime::BatchEns { samples, rng } => {
                let points = batch_ens_select(post, state.remaining(), b, *samples, rng)?;
                Ok(Selection {
                    points,
                    pruning: None,
                })
            }
        }
    }
}

/// Anything that can pick the next batch; lets the exact oracle evaluate a
/// policy by exhaustive expectation.
pub trait BatchSelector {
    fn select(
        &mut self,
        post: &mut Posterior,
        state: &SearchState,
    ) -> Result<Vec<usize>, PolicyError>;
}

impl BatchSelector for Policy {
    fn select(
        &mut self,
        post: &mut Posterior,
        state: &SearchState,
    ) -> Result<Vec<usize>, PolicyError> {
        self.select_batch(post, state).map(|s| s.points)
    }
}
