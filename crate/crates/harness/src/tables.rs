//! Aggregation of experiment records into the reporting tables.

use std::collections::BTreeMap;

use crate::experiment::ExperimentRecord;
use crate::HarnessError;

/// Terminal (end-of-budget) target counts per replication, ordered by
/// replication id.
pub fn terminal_targets(records: &[ExperimentRecord]) -> Vec<(usize, usize)> {
    let mut per_rep: BTreeMap<usize, usize> = BTreeMap::new();
    for r in records {
        let e = per_rep.entry(r.replication).or_insert(0);
        *e = (*e).max(r.cumulative_targets);
    }
    per_rep.into_iter().collect()
}

pub fn mean_terminal_targets(records: &[ExperimentRecord]) -> f64 {
    let t = terminal_targets(records);
    if t.is_empty() {
        return 0.0;
    }
    t.iter().map(|&(_, c)| c as f64).sum::<f64>() / t.len() as f64
}

/// Mean cumulative targets at `waypoint` queries, over replications.
/// `None` when the runs are shorter than the waypoint.
pub fn mean_targets_at(records: &[ExperimentRecord], waypoint: usize) -> Option<f64> {
    let mut per_rep: BTreeMap<usize, usize> = BTreeMap::new();
    let mut reachable = false;
    for r in records {
        if r.query_index <= waypoint {
            let e = per_rep.entry(r.replication).or_insert(0);
            *e = (*e).max(r.cumulative_targets);
        }
        if r.query_index == waypoint {
            reachable = true;
        }
    }
    if !reachable || per_rep.is_empty() {
        return None;
    }
    Some(per_rep.values().map(|&c| c as f64).sum::<f64>() / per_rep.len() as f64)
}

/// One row per labeled run: mean cumulative targets at each waypoint.
/// Cells are empty where a run's budget ends before the waypoint, mirroring
/// the staircase shape of budget-variation tables.
pub fn budget_waypoint_table(
    runs: &[(String, Vec<ExperimentRecord>)],
    waypoints: &[usize],
) -> Vec<(String, Vec<Option<f64>>)> {
    runs.iter()
        .map(|(label, records)| {
            let cells = waypoints
                .iter()
                .map(|&w| mean_targets_at(records, w))
                .collect();
            (label.clone(), cells)
        })
        .collect()
}

/// Empirical adaptivity ratios: mean terminal targets of the sequential runs
/// divided by the mean for each batch size, averaged over whatever policy set
/// the caller grouped under each batch size. Requires a `b = 1` baseline.
pub fn adaptivity_ratio_table(
    runs: &[(usize, Vec<ExperimentRecord>)],
) -> Result<Vec<(usize, f64)>, HarnessError> {
    let mut by_batch: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (batch, records) in runs {
        by_batch
            .entry(*batch)
            .or_default()
            .push(mean_terminal_targets(records));
    }
    let base = by_batch
        .get(&1)
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        .ok_or_else(|| HarnessError::config("adaptivity ratios need a batch-size-1 baseline"))?;
    Ok(by_batch
        .into_iter()
        .map(|(b, means)| {
            let mean = means.iter().sum::<f64>() / means.len() as f64;
            (b, base / mean)
        })
        .collect())
}

/// Per-query mean cumulative targets and mean probability at selection,
/// across replications. Rows are `(query_index, mean_cum, mean_prob)`.
pub fn mean_trace(records: &[ExperimentRecord]) -> Vec<(usize, f64, f64)> {
    let mut acc: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.query_index).or_insert((0.0, 0.0, 0));
        e.0 += r.cumulative_targets as f64;
        e.1 += r.probability;
        e.2 += 1;
    }
    acc.into_iter()
        .map(|(q, (cum, prob, n))| (q, cum / n as f64, prob / n as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(rep: usize, q: usize, cum: usize, prob: f64) -> ExperimentRecord {
        ExperimentRecord {
            replication: rep,
            iteration: q,
            query_index: q,
            point_id: q,
            probability: prob,
            label: 0,
            cumulative_targets: cum,
            pruned_fraction: None,
            iteration_wall_ms: 0.0,
        }
    }

    #[test]
    fn waypoint_cells_match_hand_aggregation() {
        let records = vec![
            rec(0, 1, 1, 0.9),
            rec(0, 2, 1, 0.8),
            rec(0, 3, 2, 0.7),
            rec(1, 1, 0, 0.5),
            rec(1, 2, 1, 0.4),
            rec(1, 3, 1, 0.3),
        ];
        assert_eq!(mean_targets_at(&records, 2), Some(1.0));
        assert_eq!(mean_targets_at(&records, 3), Some(1.5));
        assert_eq!(mean_targets_at(&records, 5), None);

        let table = budget_waypoint_table(&[("run".to_string(), records)], &[1, 3, 4]);
        assert_eq!(table[0].1, vec![Some(0.5), Some(1.5), None]);
    }

    #[test]
    fn ratios_are_one_for_identical_traces() {
        let records = vec![rec(0, 1, 1, 0.9), rec(0, 2, 2, 0.8)];
        let runs = vec![
            (1usize, records.clone()),
            (5usize, records.clone()),
            (10usize, records),
        ];
        let ratios = adaptivity_ratio_table(&runs).unwrap();
        assert_eq!(ratios, vec![(1, 1.0), (5, 1.0), (10, 1.0)]);
    }

    #[test]
    fn missing_baseline_is_an_error() {
        let runs = vec![(5usize, vec![rec(0, 1, 1, 0.9)])];
        assert!(adaptivity_ratio_table(&runs).is_err());
    }

    #[test]
    fn trace_averages_across_replications() {
        let records = vec![rec(0, 1, 1, 0.8), rec(1, 1, 0, 0.4)];
        let trace = mean_trace(&records);
        assert_eq!(trace.len(), 1);
        assert_eq!(trace[0], (1, 0.5, 0.6000000000000001));
    }
}
