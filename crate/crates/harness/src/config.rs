//! Experiment configuration: a JSON document describing one run.
//!
//! ```json
//! {
//!   "dataset": {"kind": "toy", "n": 500},
//!   "metric": "euclidean-unit",
//!   "k": 50,
//!   "gamma": 1.0,
//!   "prior": 0.1,
//!   "policy": "ens",
//!   "budget": 200,
//!   "batch_size": 1,
//!   "replications": 100,
//!   "base_seed": 0,
//!   "seed_rule": "closest-to-center",
//!   "output": {"records": "out/records.csv", "summary": "out/summary.json"}
//! }
//! ```
//!
//! `dataset.kind` is `toy` (uniform square with center/corner target discs),
//! `synthetic` (uniform square with clustered target discs; fields `n`,
//! `clusters`, `radius`) or `file` (fields `path`, `format` of `dense-csv` |
//! `sparse-fingerprint` | `knn-graph`).

use std::path::{Path, PathBuf};
use std::str::FromStr;

use active_search::policy::PolicySpec;
use active_search::Metric;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

fn default_toy_n() -> usize {
    500
}

fn default_gamma() -> f64 {
    1.0
}

fn default_prior() -> f64 {
    0.05
}

fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSource {
    /// Unit square, targets within distance 1/4 of the center or any corner.
    Toy {
        #[serde(default = "default_toy_n")]
        n: usize,
    },
    /// Unit square with `clusters` random target discs of the given radius.
    Synthetic {
        n: usize,
        clusters: usize,
        radius: f64,
    },
    /// On-disk dataset.
    File { path: PathBuf, format: FileFormat },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum FileFormat {
    DenseCsv,
    SparseFingerprint,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SeedRule {
    /// Label the point closest to the feature-space midpoint (a target by
    /// construction on toy instances).
    ClosestToCenter,
    /// Label one true target chosen uniformly at random.
    #[default]
    RandomTarget,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct OutputConfig {
    #[serde(default)]
    pub records: Option<PathBuf>,
    #[serde(default)]
    pub summary: Option<PathBuf>,
    /// Per-query mean cumulative targets and mean probability at selection.
    #[serde(default)]
    pub mean_trace: Option<PathBuf>,
    /// Raw selected-point coordinates (2-d dense datasets only).
    #[serde(default)]
    pub points: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub metric: String,
    pub k: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_prior")]
    pub prior: f64,
    pub policy: String,
    pub budget: usize,
    #[serde(default = "default_one")]
    pub batch_size: usize,
    #[serde(default = "default_one")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub seed_rule: SeedRule,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))
    }

    /// Parses and cross-checks the config, reporting every incompatibility
    /// before any work happens.
    pub fn validate(&self) -> Result<ResolvedConfig, HarnessError> {
        let metric = Metric::from_str(&self.metric).map_err(HarnessError::config)?;
        let policy: PolicySpec = self.policy.parse().map_err(HarnessError::config)?;
        policy
            .validate_batch_size(self.batch_size)
            .map_err(HarnessError::config)?;
        if self.batch_size < 1 || self.budget < self.batch_size {
            return Err(HarnessError::config(format!(
                "budget {} and batch size {} must satisfy budget >= batch >= 1",
                self.budget, self.batch_size
            )));
        }
        if self.replications < 1 {
            return Err(HarnessError::config("replications must be at least 1"));
        }
        if self.k < 1 {
            return Err(HarnessError::config("k must be at least 1"));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(HarnessError::config("gamma must be positive"));
        }
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return Err(HarnessError::config("prior must lie strictly inside (0,1)"));
        }
        let generated_dense = matches!(
            self.dataset,
            DatasetSource::Toy { .. } | DatasetSource::Synthetic { .. }
        );
        if generated_dense && metric != Metric::EuclideanUnit {
            return Err(HarnessError::config(
                "toy and synthetic datasets are dense; use metric euclidean-unit",
            ));
        }
        if let DatasetSource::File { format, .. } = &self.dataset {
            let want = match format {
                FileFormat::DenseCsv => Metric::EuclideanUnit,
                FileFormat::SparseFingerprint => Metric::JaccardWeighted,
            };
            if metric != want {
                return Err(HarnessError::config(format!(
                    "file format {format:?} requires metric {want}"
                )));
            }
        }
        if self.seed_rule == SeedRule::ClosestToCenter
            && matches!(
                self.dataset,
                DatasetSource::File {
                    format: FileFormat::SparseFingerprint,
                    ..
                }
            )
        {
            return Err(HarnessError::config(
                "seed rule closest-to-center requires dense features",
            ));
        }
        match &self.dataset {
            DatasetSource::Toy { n } if self.k >= *n => {
                return Err(HarnessError::config("k must be smaller than the pool size"))
            }
            DatasetSource::Synthetic { n, .. } if self.k >= *n => {
                return Err(HarnessError::config("k must be smaller than the pool size"))
            }
            _ => {}
        }
        Ok(ResolvedConfig { metric, policy })
    }
}

/// Pre-parsed pieces of a validated config.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub metric: Metric,
    pub policy: PolicySpec,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config(policy: &str, batch: usize) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetSource::Toy { n: 100 },
            metric: "euclidean-unit".into(),
            k: 10,
            gamma: 1.0,
            prior: 0.1,
            policy: policy.into(),
            budget: 20,
            batch_size: batch,
            replications: 2,
            base_seed: 0,
            seed_rule: SeedRule::ClosestToCenter,
            output: None,
        }
    }

    #[test]
    fn valid_config_resolves() {
        let cfg = toy_config("ens", 1);
        let resolved = cfg.validate().unwrap();
        assert_eq!(resolved.metric, Metric::EuclideanUnit);
        assert_eq!(resolved.policy, PolicySpec::Ens);
    }

    #[test]
    fn sequential_policy_with_batches_is_rejected_up_front() {
        let cfg = toy_config("ens", 5);
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(toy_config("ss-ens-0", 5).validate().is_ok());
    }

    #[test]
    fn metric_mismatch_is_rejected() {
        let mut cfg = toy_config("one-step", 1);
        cfg.metric = "jaccard-weighted".into();
        assert!(cfg.validate().is_err());
        cfg.metric = "no-such-metric".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_round_trip_with_defaults() {
        let text = r#"{
            "dataset": {"kind": "toy"},
            "metric": "euclidean-unit",
            "k": 50,
            "policy": "two-step",
            "budget": 200
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.dataset, DatasetSource::Toy { n: 500 });
        assert_eq!(cfg.batch_size, 1);
        assert_eq!(cfg.replications, 1);
        assert_eq!(cfg.prior, 0.05);
        assert_eq!(cfg.seed_rule, SeedRule::RandomTarget);
        cfg.validate().unwrap();

        let back: ExperimentConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back.dataset, cfg.dataset);
    }
}
