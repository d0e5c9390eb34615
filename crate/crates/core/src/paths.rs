//! Path queries over the undirected view of the atlas DAG, restricted to
//! regions of bounded dimension.

use std::collections::VecDeque;

use thiserror::Error;

use crate::atlas::RoadMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathQueryConfig {
    /// Interior nodes have at most this dimension.
    pub max_dim: usize,
}

impl Default for PathQueryConfig {
    fn default() -> Self {
        Self { max_dim: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("node {0} is not zero-dimensional")]
    NotZeroDimensional(usize),
    #[error("maximum dimension {0} out of range 0..=5")]
    InvalidMaxDim(usize),
}

/// Walk counts between a fixed list of nodes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PathMatrix {
    pub ids: Vec<usize>,
    /// `counts[i][j]` pairs `ids[i]` with `ids[j]`.
    pub counts: Vec<Vec<u128>>,
}

fn check_cfg(cfg: &PathQueryConfig) -> Result<(), PathError> {
    if cfg.max_dim > 5 {
        return Err(PathError::InvalidMaxDim(cfg.max_dim));
    }
    Ok(())
}

/// Neighbor lists of the restricted graph; excluded nodes get none.
fn restricted(rm: &RoadMap, cfg: &PathQueryConfig) -> Vec<Vec<usize>> {
    rm.entries
        .iter()
        .map(|e| {
            if e.dim > cfg.max_dim {
                return Vec::new();
            }
            e.neighbors
                .iter()
                .copied()
                .filter(|n| rm.entries[*n].dim <= cfg.max_dim)
                .collect()
        })
        .collect()
}

fn bfs(adj: &[Vec<usize>], from: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[from] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(x) = queue.pop_front() {
        let d = dist[x].unwrap();
        for &y in &adj[x] {
            if dist[y].is_none() {
                dist[y] = Some(d + 1);
                queue.push_back(y);
            }
        }
    }
    dist
}

fn zero_dim(rm: &RoadMap, id: usize) -> Result<(), PathError> {
    match rm.entry(id) {
        None => Err(PathError::UnknownNode(id)),
        Some(e) if e.dim != 0 => Err(PathError::NotZeroDimensional(id)),
        Some(_) => Ok(()),
    }
}

/// Shortest path between two 0D regions; among shortest paths the
/// lexicographically smallest id sequence. `None` when disconnected.
pub fn shortest_path(
    rm: &RoadMap,
    src: usize,
    dst: usize,
    cfg: &PathQueryConfig,
) -> Result<Option<Vec<usize>>, PathError> {
    check_cfg(cfg)?;
    zero_dim(rm, src)?;
    zero_dim(rm, dst)?;
    let adj = restricted(rm, cfg);
    let to_dst = bfs(&adj, dst);
    let Some(mut left) = to_dst[src] else {
        return Ok(None);
    };
    let mut path = vec![src];
    let mut cur = src;
    while left > 0 {
        // neighbor lists are ascending, so the first match is the smallest
        cur = *adj[cur]
            .iter()
            .find(|n| to_dst[**n] == Some(left - 1))
            .expect("bfs layers are connected");
        path.push(cur);
        left -= 1;
    }
    Ok(Some(path))
}

/// Walk counts from `from` to every node, one layer per length `0..=t`.
fn walk_layers(adj: &[Vec<usize>], from: usize, t: usize) -> Vec<Vec<u128>> {
    let mut cur = vec![0u128; adj.len()];
    cur[from] = 1;
    let mut layers = vec![cur.clone()];
    for _ in 0..t {
        let mut next = vec![0u128; adj.len()];
        for (x, c) in cur.iter().enumerate() {
            if *c == 0 {
                continue;
            }
            for &y in &adj[x] {
                next[y] = next[y].saturating_add(*c);
            }
        }
        layers.push(next.clone());
        cur = next;
    }
    layers
}

fn walks_from(adj: &[Vec<usize>], from: usize, t: usize) -> Vec<u128> {
    walk_layers(adj, from, t).pop().unwrap()
}

/// Number of walks of length exactly `t` between every pair of 0D regions
/// in the restricted graph. Counts saturate at `u128::MAX`.
pub fn count_paths_of_length(rm: &RoadMap, t: usize, cfg: &PathQueryConfig) -> Result<PathMatrix, PathError> {
    check_cfg(cfg)?;
    let adj = restricted(rm, cfg);
    let ids = rm.ids_of_dim(0);
    let counts = ids
        .iter()
        .map(|&i| {
            let w = walks_from(&adj, i, t);
            ids.iter().map(|&j| w[j]).collect()
        })
        .collect();
    Ok(PathMatrix { ids, counts })
}

/// Matrix over 0D and 1D regions. Entry `(i, j)` counts walks of length
/// `length`, or when `None`, of the shortest-path length between the two
/// (so it counts shortest paths; zero when disconnected).
pub fn path_matrix(rm: &RoadMap, cfg: &PathQueryConfig, length: Option<usize>) -> Result<PathMatrix, PathError> {
    check_cfg(cfg)?;
    let adj = restricted(rm, cfg);
    let ids: Vec<usize> = rm.entries.iter().filter(|e| e.dim <= 1).map(|e| e.id).collect();
    let mut counts = Vec::with_capacity(ids.len());
    for &i in &ids {
        let row = match length {
            Some(t) => {
                let w = walks_from(&adj, i, t);
                ids.iter().map(|&j| w[j]).collect()
            }
            None => {
                let dist = bfs(&adj, i);
                let max = ids.iter().filter_map(|&j| dist[j]).max().unwrap_or(0);
                let layers = walk_layers(&adj, i, max);
                ids.iter()
                    .map(|&j| dist[j].map_or(0, |d| layers[d][j]))
                    .collect()
            }
        };
        counts.push(row);
    }
    Ok(PathMatrix { ids, counts })
}
