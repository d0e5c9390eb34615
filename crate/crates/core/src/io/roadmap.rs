//! RoadMap file:
//!
//! ```text
//! roadmap 1
//! root_size 1
//! nodes 2
//! node 0 a1-b1 H=1 dim=5 status=Complete evaluated=120 good=97 witnesses=0
//! CONNECTS: 1
//! node 1 a1-b1,a2-b2 H=2 dim=4 status=Complete evaluated=40 good=31 witnesses=1
//! CONNECTS: 0
//! ```

use std::fmt::Write;
use std::path::Path;

use super::{content_lines, join, num, parse_err, write_file, IoError};
use crate::atlas::{RoadMap, RoadMapEntry};

pub fn format_roadmap(rm: &RoadMap) -> String {
    let mut s = String::new();
    writeln!(s, "roadmap 1").unwrap();
    writeln!(s, "root_size {}", rm.root_size).unwrap();
    writeln!(s, "nodes {}", rm.entries.len()).unwrap();
    for e in &rm.entries {
        writeln!(
            s,
            "node {} {} H={} dim={} status={} evaluated={} good={} witnesses={}",
            e.id, e.label, e.size, e.dim, e.status, e.evaluated, e.good, e.witnesses
        )
        .unwrap();
        if e.neighbors.is_empty() {
            writeln!(s, "CONNECTS:").unwrap();
        } else {
            writeln!(s, "CONNECTS: {}", join(&e.neighbors, " ")).unwrap();
        }
    }
    s
}

fn keyed<'a>(ln: usize, field: &'a str, key: &str) -> Result<&'a str, IoError> {
    field
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| parse_err(ln, format!("expected `{key}=`")))
}

pub fn parse_roadmap(text: &str) -> Result<RoadMap, IoError> {
    let mut lines = content_lines(text);
    let mut header = |key: &str| -> Result<(usize, String), IoError> {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(0, format!("missing `{key}`")))?;
        let v = l
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| parse_err(ln, format!("expected `{key}`")))?;
        Ok((ln, v.to_string()))
    };
    let (ln, v) = header("roadmap")?;
    if v != "1" {
        return Err(parse_err(ln, format!("unsupported roadmap version {v}")));
    }
    let (ln, v) = header("root_size")?;
    let root_size = num(ln, &v)?;
    let (ln, v) = header("nodes")?;
    let n: usize = num(ln, &v)?;
    let mut entries = Vec::with_capacity(n);
    for id in 0..n {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(0, format!("missing node {id}")))?;
        let f: Vec<&str> = l.split_whitespace().collect();
        // an empty label (no active pair) is written as nothing
        let (label, rest) = match f.len() {
            9 => (f[2].to_string(), &f[3..]),
            8 => (String::new(), &f[2..]),
            _ => return Err(parse_err(ln, "malformed node record")),
        };
        if f[0] != "node" {
            return Err(parse_err(ln, "expected `node`"));
        }
        let got: usize = num(ln, f[1])?;
        if got != id {
            return Err(parse_err(ln, format!("expected node {id}, found {got}")));
        }
        let status = keyed(ln, rest[2], "status")?
            .parse()
            .map_err(|e: String| parse_err(ln, e))?;
        let (cl, c) = lines.next().ok_or_else(|| parse_err(ln, "missing CONNECTS line"))?;
        let c = c
            .strip_prefix("CONNECTS:")
            .ok_or_else(|| parse_err(cl, "expected `CONNECTS:`"))?;
        let neighbors: Vec<usize> = c.split_whitespace().map(|x| num(cl, x)).collect::<Result<_, _>>()?;
        entries.push(RoadMapEntry {
            id,
            label,
            size: num(ln, keyed(ln, rest[0], "H")?)?,
            dim: num(ln, keyed(ln, rest[1], "dim")?)?,
            status,
            evaluated: num(ln, keyed(ln, rest[3], "evaluated")?)?,
            good: num(ln, keyed(ln, rest[4], "good")?)?,
            witnesses: num(ln, keyed(ln, rest[5], "witnesses")?)?,
            neighbors,
        });
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, "trailing content"));
    }
    for e in &entries {
        if let Some(bad) = e.neighbors.iter().find(|x| **x >= n) {
            return Err(parse_err(0, format!("node {} connects to unknown node {bad}", e.id)));
        }
    }
    Ok(RoadMap { root_size, entries })
}

pub fn load_roadmap(path: &Path) -> Result<RoadMap, IoError> {
    parse_roadmap(&std::fs::read_to_string(path)?)
}

pub fn save_roadmap(rm: &RoadMap, path: &Path) -> Result<(), IoError> {
    write_file(path, &format_roadmap(rm))
}
