//! `metrics.csv`: one row per sampling method.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub samples: usize,
    pub grid_points: usize,
    pub epsilon: f64,
    pub coverage_pct: f64,
    /// Samples relative to the reference method.
    pub ratio_pct: f64,
    /// Sum of multigrid weights.
    pub weighted_samples: usize,
}

pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, IoError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
