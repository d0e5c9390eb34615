//! Per-node sample file `Node<id>.txt`:
//!
//! ```text
//! node 4 a1-b1,a2-b2
//! status Complete
//! step 0.25
//! params a1-b2 a2-b1 a3-b3 a3-b2
//! evaluated 120
//! witnesses 1
//! witness parent=0 kind=Hit flip=010 values=1.5,2.25,1.75,2 pose=1,0,0,0,1,0,0,0,1,0.5,0,0
//! samples 1
//! sample grid=0,3,1,2 values=1.5,2.25,1.75,2 flips=000,011 flags=bw
//! real 000 0.1,0.2,0.3;1.1,0.2,0.3;0.6,1.2,0.3
//! ```
//!
//! Flips are bitstrings with character `t` set when tetrahedron `t` takes
//! its mirror placement. Flags: `b` boundary, `r` refined, `w` witness,
//! `-` none. A `pose` line follows a sample that has no chart coordinates.
//! `real` lines (B point coordinates per flip) are optional and ignored on
//! load since they are recomputed from the chart.

use std::fmt::Write;
use std::path::Path;

use super::{content_lines, join, num, num_list, parse_err, write_file, IoError};
use crate::acg::ActiveConstraintGraph;
use crate::atlas::{AtlasNode, NodeStatus, Sample, Witness, WitnessKind};
use crate::geometry::RigidTransform;
use crate::model::{PairId, Problem};
use crate::realization::N_TETS;

/// The persisted content of one atlas node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: usize,
    pub graph: ActiveConstraintGraph,
    pub status: NodeStatus,
    pub step: f64,
    pub params: Vec<PairId>,
    pub evaluated: usize,
    pub witnesses: Vec<Witness>,
    pub samples: Vec<Sample>,
}

impl NodeRecord {
    pub fn from_node(node: &AtlasNode) -> Self {
        Self {
            id: node.id,
            graph: node.graph.clone(),
            status: node.status,
            step: node.step,
            params: node.params.clone(),
            evaluated: node.evaluated,
            witnesses: node.witnesses.clone(),
            samples: node.samples.clone(),
        }
    }
}

fn flip_bits(f: u8) -> String {
    (0..N_TETS).map(|t| if f & (1 << t) != 0 { '1' } else { '0' }).collect()
}

fn parse_bits(ln: usize, s: &str) -> Result<u8, IoError> {
    if s.len() != N_TETS {
        return Err(parse_err(ln, format!("bad flip `{s}`")));
    }
    s.chars().enumerate().try_fold(0u8, |acc, (t, c)| match c {
        '0' => Ok(acc),
        '1' => Ok(acc | 1 << t),
        _ => Err(parse_err(ln, format!("bad flip `{s}`"))),
    })
}

fn pose_str(t: &RigidTransform) -> String {
    join(&t.as_array(), ",")
}

fn parse_pose(ln: usize, s: &str) -> Result<RigidTransform, IoError> {
    let v: Vec<f64> = num_list(ln, s, ',')?;
    let arr: [f64; 12] = v.try_into().map_err(|_| parse_err(ln, "pose needs 12 numbers"))?;
    Ok(RigidTransform::from_array(&arr))
}

/// Format a node. With `realizations`, each sample is followed by the B
/// point coordinates of its feasible flips.
pub fn format_node(problem: &Problem, node: &AtlasNode, realizations: bool) -> String {
    let mut s = String::new();
    writeln!(s, "node {} {}", node.id, node.graph.label(problem)).unwrap();
    writeln!(s, "status {}", node.status).unwrap();
    writeln!(s, "step {}", node.step).unwrap();
    let params: Vec<String> = node.params.iter().map(|p| problem.pair_label(*p)).collect();
    writeln!(s, "params {}", params.join(" ")).unwrap();
    writeln!(s, "evaluated {}", node.evaluated).unwrap();
    writeln!(s, "witnesses {}", node.witnesses.len()).unwrap();
    for w in &node.witnesses {
        let kind = match w.kind {
            WitnessKind::Hit => "Hit",
            WitnessKind::Closure => "Closure",
        };
        writeln!(
            s,
            "witness parent={} kind={kind} flip={} values={} pose={}",
            w.parent,
            flip_bits(w.flip),
            join(&w.values, ","),
            pose_str(&w.transform)
        )
        .unwrap();
    }
    writeln!(s, "samples {}", node.samples.len()).unwrap();
    let chart = if realizations { node.chart(problem) } else { None };
    for smp in &node.samples {
        let flips: Vec<String> = smp.flip_list().map(flip_bits).collect();
        let mut flags = String::new();
        for (on, c) in [(smp.boundary, 'b'), (smp.refined, 'r'), (smp.witness, 'w')] {
            if on {
                flags.push(c);
            }
        }
        if flags.is_empty() {
            flags.push('-');
        }
        writeln!(
            s,
            "sample grid={} values={} flips={} flags={flags}",
            join(&smp.grid, ","),
            join(&smp.values, ","),
            flips.join(",")
        )
        .unwrap();
        if let Some(p) = &smp.pose {
            writeln!(s, "pose {}", pose_str(p)).unwrap();
        }
        if realizations {
            for (f, t) in node.poses(chart.as_ref(), smp) {
                let pts: Vec<String> = problem
                    .b_positions(&t)
                    .iter()
                    .map(|p| format!("{},{},{}", p.x, p.y, p.z))
                    .collect();
                writeln!(s, "real {} {}", flip_bits(f), pts.join(";")).unwrap();
            }
        }
    }
    s
}

fn kv<'a>(ln: usize, field: Option<&&'a str>, key: &str) -> Result<&'a str, IoError> {
    field
        .and_then(|f| f.strip_prefix(key))
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| parse_err(ln, format!("expected `{key}=`")))
}

pub fn parse_node(text: &str, problem: &Problem) -> Result<NodeRecord, IoError> {
    let mut lines = content_lines(text).peekable();
    let mut next = |what: &str| lines.next().ok_or_else(|| parse_err(0, format!("missing `{what}`")));
    let value = |(ln, l): (usize, &str), key: &str| -> Result<(usize, String), IoError> {
        l.strip_prefix(key)
            .map(|r| (ln, r.trim().to_string()))
            .ok_or_else(|| parse_err(ln, format!("expected `{key}`")))
    };
    let (ln, head) = value(next("node")?, "node")?;
    let (id_s, label) = head.split_once(' ').unwrap_or((head.as_str(), ""));
    let id = num(ln, id_s)?;
    let graph = ActiveConstraintGraph::parse_label(problem, label)
        .ok_or_else(|| parse_err(ln, format!("bad label `{label}`")))?;
    let (ln, v) = value(next("status")?, "status")?;
    let status: NodeStatus = v.parse().map_err(|e: String| parse_err(ln, e))?;
    let (ln, v) = value(next("step")?, "step")?;
    let step = num(ln, &v)?;
    let (ln, v) = value(next("params")?, "params")?;
    let params = v
        .split_whitespace()
        .map(|p| {
            let (a, b) = p.split_once('-').ok_or_else(|| parse_err(ln, format!("bad pair `{p}`")))?;
            problem.pair_by_labels(a, b).map_err(|e| parse_err(ln, e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (ln, v) = value(next("evaluated")?, "evaluated")?;
    let evaluated = num(ln, &v)?;
    let (ln, v) = value(next("witnesses")?, "witnesses")?;
    let nw: usize = num(ln, &v)?;
    let mut witnesses = Vec::with_capacity(nw);
    for _ in 0..nw {
        let (ln, l) = next("witness")?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.first() != Some(&"witness") || f.len() != 6 {
            return Err(parse_err(ln, "malformed witness"));
        }
        let kind = match kv(ln, f.get(2), "kind")? {
            "Hit" => WitnessKind::Hit,
            "Closure" => WitnessKind::Closure,
            other => return Err(parse_err(ln, format!("unknown witness kind `{other}`"))),
        };
        witnesses.push(Witness {
            parent: num(ln, kv(ln, f.get(1), "parent")?)?,
            kind,
            flip: parse_bits(ln, kv(ln, f.get(3), "flip")?)?,
            values: num_list(ln, kv(ln, f.get(4), "values")?, ',')?,
            transform: parse_pose(ln, kv(ln, f.get(5), "pose")?)?,
        });
    }
    let (ln, v) = value(next("samples")?, "samples")?;
    let ns: usize = num(ln, &v)?;
    drop(next);
    let mut samples = Vec::with_capacity(ns);
    for _ in 0..ns {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(0, "missing `sample`"))?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.first() != Some(&"sample") || f.len() != 5 {
            return Err(parse_err(ln, "malformed sample"));
        }
        let mut flips = 0u8;
        let fl = kv(ln, f.get(3), "flips")?;
        if !fl.is_empty() {
            for b in fl.split(',') {
                flips |= 1 << parse_bits(ln, b)?;
            }
        }
        let flags = kv(ln, f.get(4), "flags")?;
        if flags != "-" && !flags.chars().all(|c| "brw".contains(c)) {
            return Err(parse_err(ln, format!("bad flags `{flags}`")));
        }
        let mut smp = Sample {
            grid: num_list(ln, kv(ln, f.get(1), "grid")?, ',')?,
            values: num_list(ln, kv(ln, f.get(2), "values")?, ',')?,
            flips,
            boundary: flags.contains('b'),
            refined: flags.contains('r'),
            witness: flags.contains('w'),
            pose: None,
        };
        while let Some((ln, l)) = lines.peek().copied() {
            if let Some(p) = l.strip_prefix("pose ") {
                smp.pose = Some(Box::new(parse_pose(ln, p.trim())?));
            } else if !l.starts_with("real ") {
                break;
            }
            lines.next();
        }
        samples.push(smp);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, "trailing content"));
    }
    Ok(NodeRecord {
        id,
        graph,
        status,
        step,
        params,
        evaluated,
        witnesses,
        samples,
    })
}

pub fn load_node(path: &Path, problem: &Problem) -> Result<NodeRecord, IoError> {
    parse_node(&std::fs::read_to_string(path)?, problem)
}

pub fn save_node(problem: &Problem, node: &AtlasNode, realizations: bool, path: &Path) -> Result<(), IoError> {
    write_file(path, &format_node(problem, node, realizations))
}
