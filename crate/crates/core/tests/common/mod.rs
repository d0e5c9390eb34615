#![allow(dead_code)]

pub mod charts;

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Arc;

use cayley_atlas::acg::{ActiveConstraintGraph, AMBIENT_DIM};
use cayley_atlas::atlas::{build_atlas, Atlas, AtlasConfig, NodeStatus};
use cayley_atlas::cayley::SamplerConfig;
use cayley_atlas::io::{load_problem, ProblemFile};
use cayley_atlas::model::{PairId, Problem};

pub fn toy_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/toy3.txt")
}

/// Four points against three, with over a hundred vertex regions at step 0.5.
pub fn quad() -> Arc<Problem> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/toy43.txt");
    Arc::new(load_problem(&path).expect("bundled 4+3 problem parses").problem)
}

pub fn toy_file() -> ProblemFile {
    load_problem(&toy_path()).expect("bundled toy parses")
}

pub fn toy() -> Arc<Problem> {
    Arc::new(toy_file().problem)
}

pub fn config(step: f64) -> AtlasConfig {
    AtlasConfig {
        sampler: SamplerConfig {
            step,
            ..Default::default()
        },
        ..Default::default()
    }
}

pub fn toy_atlas(step: f64) -> Atlas {
    build_atlas(toy(), &config(step))
}

/// Structural checks written against the node fields directly.
pub fn structure_errors(atlas: &Atlas) -> Vec<String> {
    let mut errs = Vec::new();
    let problem = atlas.problem();
    let admissible = |g: &ActiveConstraintGraph| {
        g.len() >= atlas.root_size() && problem.interest.as_ref().is_none_or(|i| i.intersects(g.edges()))
    };
    let mut seen = HashSet::new();
    for n in atlas.nodes() {
        let size = n.graph.len();
        if !seen.insert(n.graph.edges().to_vec()) {
            errs.push(format!("duplicate label {}", atlas.label(n.id)));
        }
        if n.status != NodeStatus::NonGeneric && (size > AMBIENT_DIM || n.dim() != AMBIENT_DIM - size) {
            errs.push(format!("node {} has |H| {size} and dim {}", n.id, n.dim()));
        }
        for &c in &n.children {
            let child = &atlas.nodes()[c];
            let superset = n.graph.edges().iter().all(|e| child.graph.contains(*e));
            if child.graph.len() != size + 1 || !superset || n.dim() != child.dim() + 1 {
                errs.push(format!("edge {} -> {c} does not step one dimension down", n.id));
            }
            if !child.parents.contains(&n.id) {
                errs.push(format!("edge {} -> {c} has no back-link", n.id));
            }
        }
        for &p in &n.parents {
            if !atlas.nodes()[p].children.contains(&n.id) {
                errs.push(format!("parent {p} of {} has no forward link", n.id));
            }
        }
        if size > atlas.root_size() {
            for e in n.graph.edges() {
                let anc: Vec<PairId> = n.graph.edges().iter().copied().filter(|x| x != e).collect();
                let anc = ActiveConstraintGraph::new(anc);
                if !admissible(&anc) {
                    continue;
                }
                match atlas.find(&anc) {
                    Some(a) if n.parents.contains(&a) => {}
                    Some(a) => errs.push(format!("ancestor {a} of {} not linked", n.id)),
                    None => errs.push(format!("node {} misses ancestor {}", n.id, anc.label(problem))),
                }
            }
            if n.witnesses.is_empty() {
                errs.push(format!("non-root node {} has no witness", n.id));
            }
        }
    }
    errs
}
