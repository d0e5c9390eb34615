//! A structure-only snapshot of an atlas: what path queries and the
//! RoadMap file need, without samples.

use super::{Atlas, NodeStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct RoadMapEntry {
    pub id: usize,
    pub label: String,
    /// Number of active constraints.
    pub size: usize,
    pub dim: usize,
    pub status: NodeStatus,
    /// Cayley points evaluated.
    pub evaluated: usize,
    /// Samples with a feasible flip.
    pub good: usize,
    pub witnesses: usize,
    /// Parents and children, ascending.
    pub neighbors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoadMap {
    pub root_size: usize,
    /// Indexed by node id.
    pub entries: Vec<RoadMapEntry>,
}

impl RoadMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: usize) -> Option<&RoadMapEntry> {
        self.entries.get(id)
    }

    /// Ids of nodes of dimension `d`, ascending.
    pub fn ids_of_dim(&self, d: usize) -> Vec<usize> {
        self.entries.iter().filter(|e| e.dim == d).map(|e| e.id).collect()
    }

    /// Number of undirected DAG edges.
    pub fn edge_count(&self) -> usize {
        self.entries.iter().map(|e| e.neighbors.len()).sum::<usize>() / 2
    }
}

impl Atlas {
    pub fn roadmap(&self) -> RoadMap {
        RoadMap {
            root_size: self.root_size(),
            entries: self
                .nodes()
                .iter()
                .map(|n| {
                    let mut neighbors: Vec<usize> = n.parents.iter().chain(&n.children).copied().collect();
                    neighbors.sort_unstable();
                    RoadMapEntry {
                        id: n.id,
                        label: self.label(n.id),
                        size: n.graph.len(),
                        dim: n.dim(),
                        status: n.status,
                        evaluated: n.evaluated,
                        good: n.good_samples(),
                        witnesses: n.witnesses.len(),
                        neighbors,
                    }
                })
                .collect(),
        }
    }
}
