//! The stratification DAG: regions labeled by active constraint graphs,
//! linked from each region to its boundary regions one dimension lower.

mod driver;
mod roadmap;
mod sampler;

pub use driver::{build_atlas, AtlasConfig, Session, SteerCommand, SteerError};
pub use roadmap::{RoadMap, RoadMapEntry};
pub use sampler::{chart_params, sample_region, Hit, RegionSampling};

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::acg::ActiveConstraintGraph;
use crate::cayley::{ConvexChart, SamplerConfig};
use crate::geometry::RigidTransform;
use crate::model::Problem;
use crate::realization::compute_realizations;
use crate::realization::raytrace::find_drop_set;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AtlasError {
    #[error("unknown node {0}")]
    UnknownNode(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeStatus {
    Unsampled,
    Sampling,
    Complete,
    NonGeneric,
}

impl fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeStatus::Unsampled => "Unsampled",
            NodeStatus::Sampling => "Sampling",
            NodeStatus::Complete => "Complete",
            NodeStatus::NonGeneric => "NonGeneric",
        })
    }
}

impl FromStr for NodeStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Unsampled" => Ok(NodeStatus::Unsampled),
            "Sampling" => Ok(NodeStatus::Sampling),
            "Complete" => Ok(NodeStatus::Complete),
            "NonGeneric" => Ok(NodeStatus::NonGeneric),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

/// A Cayley point of a region with its feasible flips. Poses are recomputed
/// from the chart on demand rather than stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sample {
    pub values: Vec<f64>,
    pub grid: Vec<u32>,
    /// Bit `f` is set when flip `f` is feasible here.
    pub flips: u8,
    /// A new pair is active here, or a parameter sits at a range endpoint.
    pub boundary: bool,
    /// Found by bisection or ray tracing rather than on the grid.
    pub refined: bool,
    /// A child's witness was taken here.
    pub witness: bool,
    /// Pose of a sample that has no chart coordinates.
    pub pose: Option<Box<RigidTransform>>,
}

impl Sample {
    pub fn flip_list(&self) -> impl Iterator<Item = u8> + '_ {
        (0..8u8).filter(|f| self.flips & (1 << f) != 0)
    }

    pub fn is_good(&self) -> bool {
        self.flips != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WitnessKind {
    /// Deposited by a parent whose sampling reached this region.
    Hit,
    /// Derived from a descendant's witness for a region created to close
    /// the ancestor set.
    Closure,
}

/// A point of a parent region certifying this region.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub parent: usize,
    pub kind: WitnessKind,
    /// Parent's Cayley coordinates at the witness pose.
    pub values: Vec<f64>,
    pub flip: u8,
    pub transform: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtlasNode {
    pub id: usize,
    pub graph: ActiveConstraintGraph,
    pub status: NodeStatus,
    /// Cayley parameters the samples are expressed in.
    pub params: Vec<crate::model::PairId>,
    pub partial_3tree: bool,
    pub samples: Vec<Sample>,
    pub witnesses: Vec<Witness>,
    pub parents: BTreeSet<usize>,
    pub children: BTreeSet<usize>,
    /// Cayley points evaluated while sampling, feasible or not.
    pub evaluated: usize,
    /// Step fraction the current samples were taken at.
    pub step: f64,
}

impl AtlasNode {
    pub fn dim(&self) -> usize {
        self.graph.dof()
    }

    /// Samples with at least one feasible flip.
    pub fn good_samples(&self) -> usize {
        self.samples.iter().filter(|s| s.is_good()).count()
    }

    /// The chart the samples' values refer to: the region's own for a
    /// partial 3-tree, else that of its ray-tracing ancestor.
    pub fn chart(&self, problem: &Problem) -> Option<ConvexChart> {
        let graph = if self.partial_3tree {
            self.graph.clone()
        } else {
            let drop = find_drop_set(&self.graph)?;
            ActiveConstraintGraph::new(self.graph.edges().iter().copied().filter(|e| !drop.contains(e)))
        };
        ConvexChart::new(problem, &graph, &SamplerConfig::default()).ok()
    }

    /// Feasible poses of a sample as `(flip, transform)`.
    pub fn poses(&self, chart: Option<&ConvexChart>, sample: &Sample) -> Vec<(u8, RigidTransform)> {
        if let Some(t) = &sample.pose {
            return sample.flip_list().take(1).map(|f| (f, **t)).collect();
        }
        let Some(chart) = chart else {
            return Vec::new();
        };
        compute_realizations(chart, &sample.values)
            .into_iter()
            .filter(|r| sample.flips & (1 << r.flip) != 0)
            .map(|r| (r.flip, r.transform))
            .collect()
    }
}

/// The atlas of one problem.
#[derive(Debug, Clone)]
pub struct Atlas {
    problem: Arc<Problem>,
    nodes: Vec<AtlasNode>,
    index: HashMap<ActiveConstraintGraph, usize>,
    roots: Vec<usize>,
    root_size: usize,
    epoch: u64,
}

impl Atlas {
    pub fn new(problem: Arc<Problem>, root_size: usize) -> Self {
        Self {
            problem,
            nodes: Vec::new(),
            index: HashMap::new(),
            roots: Vec::new(),
            root_size: root_size.max(1),
            epoch: 0,
        }
    }

    pub fn problem(&self) -> &Arc<Problem> {
        &self.problem
    }

    pub fn nodes(&self) -> &[AtlasNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn root_size(&self) -> usize {
        self.root_size
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn bump(&mut self) {
        self.epoch += 1;
    }

    pub fn node(&self, id: usize) -> Option<&AtlasNode> {
        self.nodes.get(id)
    }

    pub fn node_mut(&mut self, id: usize) -> Option<&mut AtlasNode> {
        self.nodes.get_mut(id)
    }

    pub fn find(&self, g: &ActiveConstraintGraph) -> Option<usize> {
        self.index.get(g).copied()
    }

    pub fn label(&self, id: usize) -> String {
        self.nodes[id].graph.label(&self.problem)
    }

    /// Whether a graph belongs in this atlas: at or below the root level and
    /// touching the interest set when there is one.
    pub fn admissible(&self, g: &ActiveConstraintGraph) -> bool {
        g.len() >= self.root_size
            && match &self.problem.interest {
                Some(is) => is.intersects(g.edges()),
                None => true,
            }
    }

    /// Return the node for `g`, creating it (status `Unsampled`) when absent.
    /// A created node is linked to every existing node one constraint away.
    pub fn find_or_create(&mut self, g: &ActiveConstraintGraph) -> (usize, bool) {
        if let Some(id) = self.find(g) {
            return (id, false);
        }
        let id = self.nodes.len();
        let params = Vec::new();
        self.nodes.push(AtlasNode {
            id,
            graph: g.clone(),
            status: NodeStatus::Unsampled,
            params,
            partial_3tree: g.is_partial_3tree(),
            samples: Vec::new(),
            witnesses: Vec::new(),
            parents: BTreeSet::new(),
            children: BTreeSet::new(),
            evaluated: 0,
            step: 0.0,
        });
        self.index.insert(g.clone(), id);
        for e in g.edges() {
            if let Some(pid) = self.find(&g.without_edge(*e)) {
                self.link(pid, id);
            }
        }
        let pairs: Vec<_> = self.problem.pairs().filter(|p| !g.contains(*p)).collect();
        for p in pairs {
            if let Some(cid) = self.find(&g.with_edge(p)) {
                self.link(id, cid);
            }
        }
        if g.len() == self.root_size {
            self.roots.push(id);
        }
        self.epoch += 1;
        (id, true)
    }

    pub fn link(&mut self, parent: usize, child: usize) {
        self.nodes[parent].children.insert(child);
        self.nodes[child].parents.insert(parent);
    }

    /// Create every missing single-removal ancestor of `id`, recursively,
    /// within the admissible range. Returns the newly created ids.
    pub fn close_ancestors(&mut self, id: usize) -> Vec<usize> {
        let mut created = Vec::new();
        let mut todo = vec![id];
        while let Some(x) = todo.pop() {
            let g = self.nodes[x].graph.clone();
            for e in g.edges() {
                let anc = g.without_edge(*e);
                if anc.is_empty() || !self.admissible(&anc) {
                    continue;
                }
                let (aid, new) = self.find_or_create(&anc);
                if new {
                    created.push(aid);
                    todo.push(aid);
                }
            }
        }
        created
    }

    pub fn neighbors(&self, id: usize) -> Result<(Vec<usize>, Vec<usize>), AtlasError> {
        let n = self.nodes.get(id).ok_or(AtlasError::UnknownNode(id))?;
        Ok((
            n.parents.iter().copied().collect(),
            n.children.iter().copied().collect(),
        ))
    }

    pub fn total_samples(&self) -> usize {
        self.nodes.iter().map(|n| n.evaluated).sum()
    }

    pub fn total_good_samples(&self) -> usize {
        self.nodes.iter().map(|n| n.good_samples()).sum()
    }

    /// Renumber nodes by `(|H|, label order)` so ids do not depend on the
    /// order regions were discovered in.
    pub fn renumber_canonical(&mut self) {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by(|&x, &y| {
            let (gx, gy) = (&self.nodes[x].graph, &self.nodes[y].graph);
            gx.len().cmp(&gy.len()).then_with(|| gx.cmp(gy))
        });
        let mut new_id = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            new_id[old] = new;
        }
        let mut nodes: Vec<AtlasNode> = Vec::with_capacity(order.len());
        for &old in &order {
            let mut n = self.nodes[old].clone();
            n.id = new_id[old];
            n.parents = n.parents.iter().map(|p| new_id[*p]).collect();
            n.children = n.children.iter().map(|c| new_id[*c]).collect();
            for w in &mut n.witnesses {
                w.parent = new_id[w.parent];
            }
            nodes.push(n);
        }
        self.nodes = nodes;
        self.index = self
            .nodes
            .iter()
            .map(|n| (n.graph.clone(), n.id))
            .collect();
        self.roots = self.roots.iter().map(|r| new_id[*r]).collect();
        self.roots.sort();
        self.epoch += 1;
    }

    /// Check the structural invariants; returns a description of every
    /// violation found.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut labels = std::collections::HashSet::new();
        for n in &self.nodes {
            let label = self.label(n.id);
            if !labels.insert(label.clone()) {
                errs.push(format!("duplicate label {label}"));
            }
            if n.graph.len() > crate::acg::AMBIENT_DIM && n.status != NodeStatus::NonGeneric {
                errs.push(format!("node {} has {} active edges", n.id, n.graph.len()));
            }
            for c in &n.children {
                let child = &self.nodes[*c];
                if child.graph.len() != n.graph.len() + 1
                    || !n.graph.edges().iter().all(|e| child.graph.contains(*e))
                {
                    errs.push(format!("edge {} -> {} is not a boundary step", n.id, c));
                }
                if !child.parents.contains(&n.id) {
                    errs.push(format!("edge {} -> {} missing back-link", n.id, c));
                }
            }
            if n.graph.len() > self.root_size {
                for e in n.graph.edges() {
                    let anc = n.graph.without_edge(*e);
                    if self.admissible(&anc) && self.find(&anc).is_none() {
                        errs.push(format!("node {} misses ancestor {}", n.id, anc.label(&self.problem)));
                    }
                }
                if n.witnesses.is_empty() {
                    errs.push(format!("node {} ({label}) has no witness", n.id));
                }
            }
            for w in &n.witnesses {
                if !n.parents.contains(&w.parent) {
                    errs.push(format!("node {} witness from non-parent {}", n.id, w.parent));
                }
            }
        }
        errs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::model::{PairId, Point, PointSet, Side};

    fn problem() -> Arc<Problem> {
        let mk = |side, pre: &str| {
            PointSet::new(
                side,
                (0..3)
                    .map(|i| Point::new(format!("{pre}{}", i + 1), Vec3::new(i as f64 * 3.0, (i % 2) as f64 * 2.0, 0.0), 1.0))
                    .collect(),
            )
            .unwrap()
        };
        Arc::new(Problem::with_defaults(mk(Side::A, "a"), mk(Side::B, "b")).unwrap())
    }

    fn g(edges: &[(usize, usize)]) -> ActiveConstraintGraph {
        ActiveConstraintGraph::new(edges.iter().map(|&(a, b)| PairId::new(a, b)))
    }

    #[test]
    fn find_or_create_dedups() {
        let mut at = Atlas::new(problem(), 1);
        let (x, c1) = at.find_or_create(&g(&[(0, 0)]));
        let (y, c2) = at.find_or_create(&g(&[(0, 0)]));
        assert!(c1 && !c2);
        assert_eq!(x, y);
        let (z, _) = at.find_or_create(&g(&[(0, 1)]));
        assert_ne!(x, z);
        assert_eq!(at.roots(), &[0, 1]);
    }

    #[test]
    fn links_and_closure() {
        let mut at = Atlas::new(problem(), 1);
        let (r, _) = at.find_or_create(&g(&[(0, 0)]));
        let (c, _) = at.find_or_create(&g(&[(0, 0), (1, 1), (2, 2)]));
        assert!(at.neighbors(r).unwrap().1.is_empty());
        let created = at.close_ancestors(c);
        assert_eq!(created.len(), 5); // three 2-edge and two more roots
        let (parents, _) = at.neighbors(c).unwrap();
        assert_eq!(parents.len(), 3);
        for p in parents {
            assert_eq!(at.node(p).unwrap().dim(), 4);
        }
        assert!(at.neighbors(r).unwrap().0.is_empty());
        assert_eq!(at.neighbors(99), Err(AtlasError::UnknownNode(99)));
        // no witnesses yet, otherwise structurally sound
        assert!(at.check_invariants().iter().all(|e| e.contains("no witness")));
    }

    #[test]
    fn canonical_renumbering() {
        let mut at = Atlas::new(problem(), 1);
        at.find_or_create(&g(&[(1, 1), (0, 0)]));
        at.find_or_create(&g(&[(2, 2)]));
        at.find_or_create(&g(&[(0, 0)]));
        at.renumber_canonical();
        assert_eq!(at.node(0).unwrap().graph, g(&[(0, 0)]));
        assert_eq!(at.node(1).unwrap().graph, g(&[(2, 2)]));
        assert_eq!(at.find(&g(&[(0, 0), (1, 1)])), Some(2));
        assert_eq!(at.node(2).unwrap().parents.iter().copied().collect::<Vec<_>>(), vec![0]);
    }
}
