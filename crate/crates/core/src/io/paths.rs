//! `paths.txt`: one path per line as space-separated node ids.
//! `path_matrix.txt`: an `ids` header line, then one row of counts per id.

use super::{join, num, parse_err, IoError};
use crate::paths::PathMatrix;

pub fn format_paths(paths: &[Vec<usize>]) -> String {
    paths.iter().map(|p| join(p, " ") + "\n").collect()
}

pub fn parse_paths(text: &str) -> Result<Vec<Vec<usize>>, IoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.split_whitespace().map(|x| num(i + 1, x)).collect())
        .collect()
}

pub fn format_path_matrix(m: &PathMatrix) -> String {
    let mut s = String::from("ids");
    for id in &m.ids {
        s.push(' ');
        s.push_str(&id.to_string());
    }
    s.push('\n');
    for row in &m.counts {
        s.push_str(&join(row, " "));
        s.push('\n');
    }
    s
}

pub fn parse_path_matrix(text: &str) -> Result<PathMatrix, IoError> {
    let mut lines = text.lines().enumerate();
    let (_, head) = lines.next().ok_or_else(|| parse_err(1, "missing `ids` header"))?;
    let mut f = head.split_whitespace();
    if f.next() != Some("ids") {
        return Err(parse_err(1, "expected `ids`"));
    }
    let ids: Vec<usize> = f.map(|x| num(1, x)).collect::<Result<_, _>>()?;
    let mut counts = Vec::with_capacity(ids.len());
    for (i, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let row: Vec<u128> = l.split_whitespace().map(|x| num(i + 1, x)).collect::<Result<_, _>>()?;
        if row.len() != ids.len() {
            return Err(parse_err(i + 1, format!("expected {} entries", ids.len())));
        }
        counts.push(row);
    }
    if counts.len() != ids.len() {
        return Err(parse_err(0, format!("expected {} rows, found {}", ids.len(), counts.len())));
    }
    Ok(PathMatrix { ids, counts })
}
