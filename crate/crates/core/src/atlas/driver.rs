//! Depth-first atlas construction with node-level steering and optional
//! worker threads.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::sampler::{chart_params, sample_region, RegionSampling};
use super::{Atlas, AtlasNode, NodeStatus, Sample, Witness, WitnessKind};
use crate::acg::{build_root_graphs, ActiveConstraintGraph, AMBIENT_DIM};
use crate::cayley::SamplerConfig;
use crate::geometry::RigidTransform;
use crate::model::Problem;
use crate::realization::{compute_realizations, rigidity_rank};

#[derive(Debug, Clone, PartialEq)]
pub struct AtlasConfig {
    pub sampler: SamplerConfig,
    /// Active edges per root region: 1 or 2.
    pub root_size: usize,
    /// Levels below the roots to descend; `None` for no limit.
    pub max_depth: Option<usize>,
    /// Regions of lower dimension are not created.
    pub dim_floor: usize,
    pub workers: usize,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            root_size: 1,
            max_depth: None,
            dim_floor: 0,
            workers: 1,
        }
    }
}

/// Sampling interventions, applied between nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SteerCommand {
    /// Resample a node at a finer step, replacing its samples.
    Refine { node: usize, step: f64 },
    /// Stop creating regions below this dimension.
    Limit { dim_floor: usize },
    /// Prefer the subtree below a node.
    Redirect { node: usize },
    Stop,
    Resume,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteerError {
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("invalid step {0}")]
    InvalidStep(f64),
    #[error("dimension floor {0} out of range")]
    InvalidFloor(usize),
}

#[derive(Debug)]
struct Sched {
    stack: Vec<usize>,
    refine: VecDeque<(usize, f64)>,
    focus: Option<ActiveConstraintGraph>,
    stopped: bool,
    dim_floor: usize,
    in_flight: usize,
}

struct Job {
    id: usize,
    graph: ActiveConstraintGraph,
    step: f64,
    with_hits: bool,
}

/// A sampling run over a shared atlas. Readers take the atlas lock; the
/// atlas epoch advances on every change.
pub struct Session {
    problem: Arc<Problem>,
    atlas: Arc<RwLock<Atlas>>,
    sched: Mutex<Sched>,
    cv: Condvar,
    cfg: AtlasConfig,
}

impl Session {
    pub fn new(problem: Arc<Problem>, cfg: AtlasConfig) -> Self {
        let mut atlas = Atlas::new(problem.clone(), cfg.root_size);
        let mut stack = Vec::new();
        for g in build_root_graphs(&problem, cfg.root_size) {
            let (id, _) = atlas.find_or_create(&g);
            stack.push(id);
        }
        stack.reverse();
        Self {
            problem,
            atlas: Arc::new(RwLock::new(atlas)),
            sched: Mutex::new(Sched {
                stack,
                refine: VecDeque::new(),
                focus: None,
                stopped: false,
                dim_floor: cfg.dim_floor,
                in_flight: 0,
            }),
            cv: Condvar::new(),
            cfg,
        }
    }

    pub fn atlas(&self) -> Arc<RwLock<Atlas>> {
        self.atlas.clone()
    }

    pub fn config(&self) -> &AtlasConfig {
        &self.cfg
    }

    pub fn is_stopped(&self) -> bool {
        self.sched.lock().unwrap().stopped
    }

    /// No node is being sampled right now.
    pub fn is_idle(&self) -> bool {
        self.sched.lock().unwrap().in_flight == 0
    }

    fn max_edges(&self) -> usize {
        match self.cfg.max_depth {
            Some(d) => (self.cfg.root_size + d).min(AMBIENT_DIM),
            None => AMBIENT_DIM,
        }
    }

    fn may_create(&self, g: &ActiveConstraintGraph, dim_floor: usize) -> bool {
        g.len() <= self.max_edges() && g.dof() >= dim_floor
    }

    /// Sample until no work is left or a stop is requested.
    pub fn run(&self) {
        let workers = self.cfg.workers.max(1);
        if workers == 1 {
            self.worker();
        } else {
            std::thread::scope(|s| {
                for _ in 0..workers {
                    s.spawn(|| self.worker());
                }
            });
        }
    }

    /// Keep running, waking up for steering commands, until `shutdown`
    /// returns true.
    pub fn serve(&self, shutdown: impl Fn() -> bool) {
        while !shutdown() {
            self.run();
            let sched = self.sched.lock().unwrap();
            let _ = self.cv.wait_timeout(sched, Duration::from_millis(100)).unwrap();
        }
    }

    fn worker(&self) {
        loop {
            let job = {
                let mut sched = self.sched.lock().unwrap();
                loop {
                    if let Some(job) = self.next_job(&mut sched) {
                        sched.in_flight += 1;
                        break job;
                    }
                    if sched.in_flight == 0 || sched.stopped {
                        self.cv.notify_all();
                        return;
                    }
                    sched = self.cv.wait(sched).unwrap();
                }
            };
            self.execute(job);
        }
    }

    fn execute(&self, job: Job) {
        let cfg = SamplerConfig {
            step: job.step,
            ..self.cfg.sampler
        };
        let result = sample_region(&self.problem, &job.graph, &cfg, job.with_hits);
        let mut sched = self.sched.lock().unwrap();
        {
            let mut atlas = self.atlas.write().unwrap();
            self.integrate(&mut atlas, &mut sched, &job, result);
        }
        sched.in_flight -= 1;
        self.cv.notify_all();
    }

    /// Sample the next scheduled node on the calling thread. Returns false
    /// when there is nothing to do.
    pub fn step(&self) -> bool {
        let job = {
            let mut sched = self.sched.lock().unwrap();
            let job = self.next_job(&mut sched);
            if job.is_some() {
                sched.in_flight += 1;
            }
            job
        };
        match job {
            Some(job) => {
                self.execute(job);
                true
            }
            None => false,
        }
    }

    fn next_job(&self, sched: &mut Sched) -> Option<Job> {
        if sched.stopped {
            return None;
        }
        let mut atlas = self.atlas.write().unwrap();
        let floor = sched.dim_floor;
        let max_edges = self.max_edges();
        let with_hits = |g: &ActiveConstraintGraph| {
            g.len() < max_edges && AMBIENT_DIM - (g.len() + 1) >= floor
        };
        if let Some((id, step)) = sched.refine.pop_front() {
            let graph = atlas.node(id)?.graph.clone();
            atlas.node_mut(id).unwrap().status = NodeStatus::Sampling;
            atlas.bump();
            return Some(Job {
                id,
                with_hits: with_hits(&graph),
                graph,
                step,
            });
        }
        let mut swept = false;
        loop {
            let pick = match &sched.focus {
                Some(f) => sched
                    .stack
                    .iter()
                    .rposition(|id| f.edges().iter().all(|e| atlas.nodes[*id].graph.contains(*e))),
                None => None,
            };
            let next = match pick {
                Some(i) => Some(sched.stack.remove(i)),
                None => sched.stack.pop(),
            };
            match next {
                Some(id) => {
                    let n = &atlas.nodes[id];
                    if n.status != NodeStatus::Unsampled || n.dim() < floor {
                        continue;
                    }
                    let graph = n.graph.clone();
                    atlas.node_mut(id).unwrap().status = NodeStatus::Sampling;
                    atlas.bump();
                    return Some(Job {
                        id,
                        with_hits: with_hits(&graph),
                        graph,
                        step: self.cfg.sampler.step,
                    });
                }
                None if !swept => {
                    // regions created to close ancestor sets and never reached
                    swept = true;
                    let mut todo: Vec<usize> = atlas
                        .nodes
                        .iter()
                        .filter(|n| n.status == NodeStatus::Unsampled && n.dim() >= floor)
                        .map(|n| n.id)
                        .collect();
                    todo.reverse();
                    sched.stack = todo;
                }
                None => return None,
            }
        }
    }

    fn integrate(&self, atlas: &mut Atlas, sched: &mut Sched, job: &Job, mut result: RegionSampling) {
        let id = job.id;
        let graph = job.graph.clone();
        {
            let node = atlas.node_mut(id).unwrap();
            node.params = std::mem::take(&mut result.params);
            node.evaluated = result.evaluated;
            node.samples = std::mem::take(&mut result.samples);
            node.step = job.step;
        }
        let mut pushed = Vec::new();
        for hit in &result.hits {
            let child = graph.with_edge(hit.pair);
            if !self.may_create(&child, sched.dim_floor) {
                continue;
            }
            let (cid, created) = atlas.find_or_create(&child);
            atlas.link(id, cid);
            let c = atlas.node_mut(cid).unwrap();
            if !c.witnesses.iter().any(|w| w.parent == id && w.flip == hit.flip && w.kind == WitnessKind::Hit) {
                c.witnesses.push(Witness {
                    parent: id,
                    kind: WitnessKind::Hit,
                    values: hit.values.clone(),
                    flip: hit.flip,
                    transform: hit.transform,
                });
            }
            if created {
                // regions created only to close the ancestor set get the hit
                // pose as a provisional witness; finalize replaces it
                for aid in atlas.close_ancestors(cid) {
                    let Some(&parent) = atlas.nodes()[aid].parents.iter().next() else {
                        continue;
                    };
                    let params = chart_params(&self.problem, &atlas.nodes()[parent].graph);
                    let values = params.iter().map(|p| self.problem.dist(&hit.transform, *p)).collect();
                    atlas.node_mut(aid).unwrap().witnesses.push(Witness {
                        parent,
                        kind: WitnessKind::Closure,
                        values,
                        flip: hit.flip,
                        transform: hit.transform,
                    });
                }
            }
            if atlas.nodes[cid].status == NodeStatus::Unsampled {
                pushed.push(cid);
            }
        }
        pushed.dedup();
        for cid in pushed.into_iter().rev() {
            sched.stack.push(cid);
        }
        fill_rigid_samples(atlas, id);
        let status = if is_non_generic(&self.problem, &atlas.nodes()[id], &result) {
            NodeStatus::NonGeneric
        } else {
            NodeStatus::Complete
        };
        atlas.node_mut(id).unwrap().status = status;
        atlas.bump();
    }

    /// Apply a steering command; returns the atlas epoch after applying it.
    pub fn steer(&self, cmd: SteerCommand) -> Result<u64, SteerError> {
        let mut sched = self.sched.lock().unwrap();
        let mut atlas = self.atlas.write().unwrap();
        match cmd {
            SteerCommand::Refine { node, step } => {
                if atlas.node(node).is_none() {
                    return Err(SteerError::UnknownNode(node));
                }
                if !(step > 0.0) || !step.is_finite() {
                    return Err(SteerError::InvalidStep(step));
                }
                sched.refine.push_back((node, step));
            }
            SteerCommand::Limit { dim_floor } => {
                if dim_floor > AMBIENT_DIM {
                    return Err(SteerError::InvalidFloor(dim_floor));
                }
                sched.dim_floor = dim_floor;
            }
            SteerCommand::Redirect { node } => {
                let n = atlas.node(node).ok_or(SteerError::UnknownNode(node))?;
                sched.focus = Some(n.graph.clone());
                if n.status == NodeStatus::Unsampled {
                    sched.stack.push(node);
                }
            }
            SteerCommand::Stop => sched.stopped = true,
            SteerCommand::Resume => sched.stopped = false,
        }
        atlas.bump();
        self.cv.notify_all();
        Ok(atlas.epoch())
    }

    /// Deterministic post-processing once sampling is over: witness order,
    /// witnesses for regions created only to close ancestor sets, and
    /// canonical ids so output does not depend on the worker count.
    pub fn finalize(&self) {
        let mut atlas = self.atlas.write().unwrap();
        finalize(&mut atlas);
    }
}

/// 0D regions that are not partial 3-trees have no chart; their samples are
/// the distinct witness poses.
fn fill_rigid_samples(atlas: &mut Atlas, id: usize) {
    let tol = atlas.problem().tol();
    let node = atlas.node_mut(id).unwrap();
    if node.dim() > 0 || node.partial_3tree {
        return;
    }
    let mut samples: Vec<Sample> = Vec::new();
    for w in &node.witnesses {
        let dup = samples
            .iter()
            .any(|s| s.pose.as_ref().is_some_and(|p| same_pose(p, &w.transform, tol * 1e3)));
        if !dup {
            samples.push(Sample {
                values: Vec::new(),
                grid: Vec::new(),
                flips: 1 << w.flip,
                boundary: false,
                refined: true,
                witness: false,
                pose: Some(Box::new(w.transform)),
            });
        }
    }
    node.evaluated = samples.len();
    node.samples = samples;
}

fn pose_gap(x: &RigidTransform, y: &RigidTransform) -> f64 {
    (x.translation - y.translation).norm() + (x.rotation - y.rotation).abs().max()
}

fn same_pose(x: &RigidTransform, y: &RigidTransform, tol: f64) -> bool {
    (x.translation - y.translation).norm() <= tol && (x.rotation - y.rotation).abs().max() <= tol
}

/// Flag a region whose active edges are not independent at a feasible pose,
/// or in which some other pair stays active at a fixed length throughout.
fn is_non_generic(problem: &Problem, node: &AtlasNode, result: &RegionSampling) -> bool {
    let pose = result
        .first_pose
        .or_else(|| node.witnesses.first().map(|w| w.transform));
    if let Some(t) = pose {
        if rigidity_rank(problem, &node.graph, &t) < node.graph.len() {
            return true;
        }
    }
    node.dim() > 0 && !result.implied.is_empty()
}

fn cmp_values(x: &[f64], y: &[f64]) -> std::cmp::Ordering {
    for (a, b) in x.iter().zip(y) {
        match a.total_cmp(b) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    x.len().cmp(&y.len())
}

pub(crate) fn finalize(atlas: &mut Atlas) {
    let problem = atlas.problem().clone();
    let graphs: Vec<ActiveConstraintGraph> = atlas.nodes().iter().map(|n| n.graph.clone()).collect();
    for id in 0..atlas.len() {
        let node = atlas.node_mut(id).unwrap();
        node.witnesses.retain(|w| w.kind == WitnessKind::Hit);
        node.witnesses.sort_by(|x, y| {
            graphs[x.parent]
                .cmp(&graphs[y.parent])
                .then(x.flip.cmp(&y.flip))
                .then_with(|| cmp_values(&x.values, &y.values))
        });
    }
    let mut order: Vec<usize> = (0..atlas.len()).collect();
    order.sort_by(|&x, &y| graphs[y].len().cmp(&graphs[x].len()).then_with(|| graphs[x].cmp(&graphs[y])));
    for id in order {
        let node = &atlas.nodes()[id];
        if node.graph.len() <= atlas.root_size() || !node.witnesses.is_empty() || node.parents.is_empty() {
            continue;
        }
        let mut children: Vec<usize> = node.children.iter().copied().collect();
        children.sort_by(|x, y| graphs[*x].cmp(&graphs[*y]));
        let Some(src) = children
            .iter()
            .find_map(|c| atlas.nodes()[*c].witnesses.first().cloned())
        else {
            continue;
        };
        let parent = *node
            .parents
            .iter()
            .min_by(|x, y| graphs[**x].cmp(&graphs[**y]))
            .unwrap();
        let pnode = &atlas.nodes()[parent];
        let params = if pnode.params.is_empty() {
            chart_params(&problem, &pnode.graph)
        } else {
            pnode.params.clone()
        };
        let values: Vec<f64> = params.iter().map(|p| problem.dist(&src.transform, *p)).collect();
        // the flip of the parent's chart that reproduces the pose
        let flip = pnode
            .chart(&problem)
            .and_then(|c| {
                compute_realizations(&c, &values).into_iter().min_by(|x, y| {
                    pose_gap(&x.transform, &src.transform).total_cmp(&pose_gap(&y.transform, &src.transform))
                })
            })
            .map_or(src.flip, |r| r.flip);
        atlas.node_mut(id).unwrap().witnesses.push(Witness {
            parent,
            kind: WitnessKind::Closure,
            values,
            flip,
            transform: src.transform,
        });
    }
    // regions checked only at a witness: recheck at the first one in the
    // now deterministic order
    for id in 0..atlas.len() {
        let node = &atlas.nodes()[id];
        let sampled = matches!(node.status, NodeStatus::Complete | NodeStatus::NonGeneric);
        if !sampled || !node.samples.iter().all(|s| s.pose.is_some()) {
            continue;
        }
        let status = match node.witnesses.first() {
            Some(w) if rigidity_rank(&problem, &node.graph, &w.transform) < node.graph.len() => NodeStatus::NonGeneric,
            _ => NodeStatus::Complete,
        };
        atlas.node_mut(id).unwrap().status = status;
    }
    for id in 0..atlas.len() {
        fill_rigid_samples(atlas, id);
    }
    atlas.renumber_canonical();
    atlas.bump();
}

/// Build a complete atlas.
pub fn build_atlas(problem: Arc<Problem>, cfg: &AtlasConfig) -> Atlas {
    let session = Session::new(problem, cfg.clone());
    session.run();
    session.finalize();
    let atlas = session.atlas();
    drop(session);
    match Arc::try_unwrap(atlas) {
        Ok(lock) => lock.into_inner().unwrap(),
        Err(shared) => shared.read().unwrap().clone(),
    }
}
