//! Paired t-test.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("paired samples have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 pairs, got {0}")]
    TooFewPairs(usize),
}

/// Result of a paired t-test of `a` against `b` (differences `a - b`).
/// `p_one_sided` tests the alternative `mean(a - b) > 0`.
#[derive(Debug, Clone, Serialize)]
pub struct TTestResult {
    pub mean_difference: f64,
    pub t_statistic: f64,
    pub p_two_sided: f64,
    pub p_one_sided: f64,
    pub ci95: (f64, f64),
    pub pair_count: usize,
    /// All differences identical: the t statistic is degenerate.
    pub degenerate: bool,
}

/// CDF of Student's t with `df` degrees of freedom, via the regularized
/// incomplete beta function.
pub fn t_cdf(x: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df).expect("df > 0").cdf(x)
}

pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFewPairs(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();

    if sd == 0.0 {
        // Zero-variance differences: a == b gives the textbook t = 0, p = 1;
        // a constant nonzero shift is infinitely significant.
        let (t, p2, p1) = if mean == 0.0 {
            (0.0, 1.0, 0.5)
        } else if mean > 0.0 {
            (f64::INFINITY, 0.0, 0.0)
        } else {
            (f64::NEG_INFINITY, 0.0, 1.0)
        };
        return Ok(TTestResult {
            mean_difference: mean,
            t_statistic: t,
            p_two_sided: p2,
            p_one_sided: p1,
            ci95: (mean, mean),
            pair_count: n,
            degenerate: true,
        });
    }

    let se = sd / (n as f64).sqrt();
    let t = mean / se;
    let df = (n - 1) as f64;
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    let p_two_sided = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    let p_one_sided = (1.0 - dist.cdf(t)).clamp(0.0, 1.0);
    let t_crit = dist.inverse_cdf(0.975);
    Ok(TTestResult {
        mean_difference: mean,
        t_statistic: t,
        p_two_sided,
        p_one_sided,
        ci95: (mean - t_crit * se, mean + t_crit * se),
        pair_count: n,
        degenerate: false,
    })
}
