//! CSV and JSON exports of a session.

use std::fs;
use std::path::Path;

use remap_core::{DistanceMatrix, Metric, Projection};

use crate::session::SessionState;

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ExportError + '_ {
    move |source| ExportError::Csv { path: path.display().to_string(), source }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io { path: path.display().to_string(), source }
}

/// Header `id,<id1>,<id2>,...`, then one row per model. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_distances(matrix: &DistanceMatrix, path: &Path) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["id".to_string()];
    header.extend(matrix.ids.iter().cloned());
    w.write_record(&header).map_err(csv_err(path))?;
    for (i, id) in matrix.ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(matrix.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_distances(path: &Path, metric: Metric) -> Result<DistanceMatrix, ExportError> {
    let format = |message: String| ExportError::Format { path: path.display().to_string(), message };
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.get(0) != Some("id") {
        return Err(format("first header column must be `id`".into()));
    }
    let ids: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut rows = Vec::with_capacity(ids.len());
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        if ids.get(i).map(String::as_str) != record.get(0) {
            return Err(format(format!("row {} is labelled {:?}", i + 1, record.get(0))));
        }
        let row = record
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|e| format(format!("row {}: {e}", i + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    DistanceMatrix::from_rows(metric, ids, &rows).ok_or_else(|| format("not a square symmetric distance table".into()))
}

/// Columns `id,projection,x,y`; unfitted projections contribute no rows.
pub fn write_embeddings(state: &SessionState, path: &Path) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["id", "projection", "x", "y"]).map_err(csv_err(path))?;
    for projection in Projection::ALL {
        if let Some(e) = state.projection(projection) {
            for p in &e.points {
                w.write_record([p.id.as_str(), projection.name(), &p.x.to_string(), &p.y.to_string()])
                    .map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

/// JSON array of registry entries (architecture, config and record).
pub fn write_models(state: &SessionState, path: &Path) -> Result<(), ExportError> {
    let text = serde_json::to_string_pretty(&state.models).expect("models serialize");
    fs::write(path, text + "\n").map_err(io_err(path))
}
