//! CSV/JSON emission.

use std::path::Path;

use active_search::Dataset;

use crate::experiment::{ExperimentRecord, RunSummary};
use crate::HarnessError;

pub fn records_to_csv_string(records: &[ExperimentRecord]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(HarnessError::data)?;
    }
    let bytes = w.into_inner().map_err(HarnessError::data)?;
    String::from_utf8(bytes).map_err(HarnessError::data)
}

pub fn write_records_csv(
    path: impl AsRef<Path>,
    records: &[ExperimentRecord],
) -> Result<(), HarnessError> {
    let text = records_to_csv_string(records)?;
    write_file(path, text.as_bytes())
}

pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<ExperimentRecord>, HarnessError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| HarnessError::data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| HarnessError::data(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn write_summary_json(
    path: impl AsRef<Path>,
    summary: &RunSummary,
) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(summary).map_err(HarnessError::data)?;
    write_file(path, text.as_bytes())
}

/// Plot-ready per-query trace: `query_index,mean_cumulative_targets,mean_probability`.
pub fn write_mean_trace_csv(
    path: impl AsRef<Path>,
    trace: &[(usize, f64, f64)],
) -> Result<(), HarnessError> {
    let mut text = String::from("query_index,mean_cumulative_targets,mean_probability\n");
    for &(q, cum, prob) in trace {
        text.push_str(&format!("{q},{cum},{prob}\n"));
    }
    write_file(path, text.as_bytes())
}

/// Raw selected-point coordinates for 2-d dense datasets (the density-plot
/// replacement): `replication,query_index,point_id,x,y,label`.
pub fn write_points_csv(
    path: impl AsRef<Path>,
    dataset: &Dataset,
    records: &[ExperimentRecord],
) -> Result<(), HarnessError> {
    if dataset.dim() != Some(2) {
        return Err(HarnessError::config(
            "point coordinate emission needs a 2-d dense dataset",
        ));
    }
    let mut text = String::from("replication,query_index,point_id,x,y,label\n");
    for r in records {
        let row = dataset.dense_row(r.point_id);
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.replication, r.query_index, r.point_id, row[0], row[1], r.label
        ));
    }
    write_file(path, text.as_bytes())
}

fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<(), HarnessError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| HarnessError::data(format!("{}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::data(format!("{}: {e}", path.display())))
}
