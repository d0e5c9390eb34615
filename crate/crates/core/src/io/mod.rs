//! Line-oriented text formats: problem input, RoadMap, per-node sample
//! files, paths, path matrix and metrics CSV. Floats are written in
//! shortest round-trip decimal form, so every load of a saved file is exact.

mod metrics;
mod nodefile;
mod paths;
mod problem;
mod roadmap;

pub use metrics::{read_metrics, write_metrics, MetricsRow};
pub use nodefile::{format_node, load_node, parse_node, save_node, NodeRecord};
pub use paths::{format_path_matrix, format_paths, parse_path_matrix, parse_paths};
pub use problem::{format_problem, load_problem, parse_problem, save_problem, ProblemFile};
pub use roadmap::{format_roadmap, load_roadmap, parse_roadmap, save_roadmap};

use std::path::Path;

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse { line, msg: msg.into() }
}

pub(crate) fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, IoError> {
    s.parse().map_err(|_| parse_err(line, format!("bad number `{s}`")))
}

pub(crate) fn num_list<T: std::str::FromStr>(line: usize, s: &str, sep: char) -> Result<Vec<T>, IoError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(sep).map(|x| num(line, x)).collect()
}

pub(crate) fn join<T: std::fmt::Display>(xs: &[T], sep: &str) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

/// Non-blank, non-comment lines with 1-based line numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text)?;
    Ok(())
}
