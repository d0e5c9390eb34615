//! Sampling one region: a pure function from (problem, graph, step) to the
//! samples found and the boundary hits that lead to child regions.

use std::collections::HashSet;

use log::debug;

use super::Sample;
use crate::acg::{complete_3tree, ActiveConstraintGraph};
use crate::cayley::{CayleyPoint, ConvexChart, SamplerConfig};
use crate::geometry::RigidTransform;
use crate::model::{PairId, Problem};
use crate::realization::raytrace::{find_drop_set, ray_trace_populate};
use crate::realization::{
    binary_search_boundary, classify, compute_realizations, evaluate, Onset, PairState,
};

/// A pose inside this region at which another pair is active.
#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub pair: PairId,
    pub values: Vec<f64>,
    pub flip: u8,
    pub transform: RigidTransform,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionSampling {
    pub params: Vec<PairId>,
    /// Cayley points evaluated.
    pub evaluated: usize,
    /// Points with at least one feasible flip, in sweep order.
    pub samples: Vec<Sample>,
    /// First hit per (new pair, flip), in discovery order.
    pub hits: Vec<Hit>,
    pub empty_prefixes: usize,
    /// A feasible pose of the region, if any was found.
    pub first_pose: Option<RigidTransform>,
    /// Pairs outside the region's graph that are active at one fixed length
    /// at every feasible pose found (only meaningful with two or more).
    pub implied: Vec<PairId>,
    /// Feasible poses seen.
    pub poses_seen: usize,
}

/// Cayley parameters used for a region: those of its own completion when it
/// is a partial 3-tree, else those of the ray-tracing ancestor.
pub fn chart_params(problem: &Problem, graph: &ActiveConstraintGraph) -> Vec<PairId> {
    if graph.is_partial_3tree() {
        complete_3tree(graph, problem).map(|c| c.params).unwrap_or_default()
    } else {
        find_drop_set(graph)
            .and_then(|drop| {
                let anc = ActiveConstraintGraph::new(
                    graph.edges().iter().copied().filter(|e| !drop.contains(e)),
                );
                complete_3tree(&anc, problem).ok()
            })
            .map(|c| c.params)
            .unwrap_or_default()
    }
}

struct Recorder<'a> {
    problem: &'a Problem,
    graph: &'a ActiveConstraintGraph,
    with_hits: bool,
    seen: HashSet<(PairId, u8)>,
    out: RegionSampling,
    /// Per pair: (always inside, min, max) over feasible poses.
    spread: Vec<(bool, f64, f64)>,
}

impl Recorder<'_> {
    fn feasible_pose(&mut self, t: &RigidTransform) {
        if self.out.first_pose.is_none() {
            self.out.first_pose = Some(*t);
        }
        self.out.poses_seen += 1;
        let bpos = self.problem.b_positions(t);
        for (k, p) in self.problem.pairs().enumerate() {
            let s = &mut self.spread[k];
            if !s.0 {
                continue;
            }
            let d = (self.problem.a.points[p.a].pos - bpos[p.b]).norm();
            if self.graph.contains(p) || !self.problem.is_active(p, d) {
                s.0 = false;
                continue;
            }
            s.1 = s.1.min(d);
            s.2 = s.2.max(d);
        }
    }

    fn finish(mut self) -> RegionSampling {
        let tol = 1e-6 * self.problem.scale();
        if self.out.poses_seen >= 2 {
            self.out.implied = self
                .problem
                .pairs()
                .zip(&self.spread)
                .filter(|(_, s)| s.0 && s.2 - s.1 <= tol)
                .map(|(p, _)| p)
                .collect();
        }
        self.out
    }

    /// Record a hit; true when it is the first for its pair and flip.
    fn hit(&mut self, pair: PairId, values: &[f64], flip: u8, t: &RigidTransform) -> bool {
        if self.with_hits && self.seen.insert((pair, flip)) {
            self.out.hits.push(Hit {
                pair,
                values: values.to_vec(),
                flip,
                transform: *t,
            });
            return true;
        }
        false
    }
}

/// Sample a region. Children are reported as hits only when `with_hits`.
pub fn sample_region(
    problem: &Problem,
    graph: &ActiveConstraintGraph,
    cfg: &SamplerConfig,
    with_hits: bool,
) -> RegionSampling {
    let mut rec = Recorder {
        problem,
        graph,
        with_hits,
        seen: HashSet::new(),
        out: RegionSampling::default(),
        spread: vec![(true, f64::INFINITY, f64::NEG_INFINITY); problem.n_pairs()],
    };
    if graph.is_partial_3tree() {
        match ConvexChart::new(problem, graph, cfg) {
            Ok(chart) => sample_chart(&mut rec, &chart),
            Err(e) => debug!("no chart for {}: {e}", graph.label(problem)),
        }
    } else if graph.len() < crate::acg::AMBIENT_DIM {
        sample_by_rays(&mut rec, cfg);
    }
    rec.finish()
}

/// Distance state of every pair outside `H` with positive width.
fn pair_states(problem: &Problem, graph: &ActiveConstraintGraph, t: &RigidTransform) -> Vec<PairState> {
    let bpos = problem.b_positions(t);
    problem
        .pairs()
        .map(|p| {
            if graph.contains(p) || problem.delta(p) <= 0.0 {
                PairState::Inside
            } else {
                classify(problem, p, (problem.a.points[p.a].pos - bpos[p.b]).norm())
            }
        })
        .collect()
}

fn sample_chart(rec: &mut Recorder<'_>, chart: &ConvexChart) {
    let problem = rec.problem;
    let graph = rec.graph;
    rec.out.params = chart.params.clone();
    let d = chart.dim();
    let pairs: Vec<PairId> = problem.pairs().collect();
    let mut prev: Option<(CayleyPoint, Vec<(u8, Vec<PairState>)>)> = None;
    let mut grid = chart.grid();
    while let Some(pt) = grid.next() {
        rec.out.evaluated += 1;
        let at_end = pt.values.iter().enumerate().any(|(i, v)| {
            let (lo, hi) = grid.ranges()[i];
            *v == lo || *v == hi
        });
        let rs = compute_realizations(chart, &pt.values);
        let mut sample = Sample {
            values: pt.values.clone(),
            grid: pt.grid.clone(),
            boundary: at_end,
            ..Default::default()
        };
        let mut states = Vec::with_capacity(rs.len());
        for r in &rs {
            let ev = evaluate(problem, graph, &chart.params, &r.transform);
            if ev.feasible() {
                sample.flips |= 1 << r.flip;
                rec.feasible_pose(&r.transform);
                for p in &ev.new_active {
                    sample.boundary = true;
                    sample.witness |= rec.hit(*p, &pt.values, r.flip, &r.transform);
                }
            }
            if rec.with_hits && d > 0 {
                states.push((r.flip, pair_states(problem, graph, &r.transform)));
            }
        }
        if let Some((pp, pstates)) = &prev {
            if pp.grid[..d - 1] == pt.grid[..d - 1] {
                refine_transitions(rec, chart, &pairs, pp, pstates, &pt, &states);
            }
        }
        if sample.is_good() {
            rec.out.samples.push(sample);
        }
        if rec.with_hits && d > 0 {
            prev = Some((pt, states));
        }
    }
    rec.out.empty_prefixes = grid.empty_prefixes;
}

/// Between two neighbouring points on the innermost axis, a pair that jumps
/// from above its interval to below it (or back) on the same flip crossed
/// the interval without a grid point landing inside; bisect for the crossing.
fn refine_transitions(
    rec: &mut Recorder<'_>,
    chart: &ConvexChart,
    pairs: &[PairId],
    p0: &CayleyPoint,
    s0: &[(u8, Vec<PairState>)],
    p1: &CayleyPoint,
    s1: &[(u8, Vec<PairState>)],
) {
    let axis = chart.dim() - 1;
    for (flip, a) in s0 {
        let Some((_, b)) = s1.iter().find(|x| x.0 == *flip) else {
            continue;
        };
        for (k, pair) in pairs.iter().enumerate() {
            let (x, y) = (a[k], b[k]);
            if x == y || x == PairState::Inside || y == PairState::Inside {
                continue;
            }
            if rec.seen.contains(&(*pair, *flip)) {
                continue;
            }
            let (good, bad) = if x == PairState::Below {
                (p0.values[axis], p1.values[axis])
            } else {
                (p1.values[axis], p0.values[axis])
            };
            let Ok(h) = binary_search_boundary(
                rec.problem,
                chart,
                &p0.values,
                axis,
                *flip,
                good,
                bad,
                *pair,
                Onset::Upper,
            ) else {
                continue;
            };
            let t = h.realization.transform;
            let ev = evaluate(rec.problem, rec.graph, &chart.params, &t);
            if !ev.feasible() || !ev.new_active.contains(pair) {
                continue;
            }
            rec.feasible_pose(&t);
            let mut witness = false;
            for p in &ev.new_active {
                witness |= rec.hit(*p, &h.values, *flip, &t);
            }
            rec.out.samples.push(Sample {
                values: h.values.clone(),
                grid: p0.grid.clone(),
                flips: 1 << flip,
                boundary: true,
                refined: true,
                witness,
                pose: None,
            });
        }
    }
}

fn sample_by_rays(rec: &mut Recorder<'_>, cfg: &SamplerConfig) {
    let problem = rec.problem;
    let graph = rec.graph;
    let Some(drop) = find_drop_set(graph) else {
        return;
    };
    let anc = ActiveConstraintGraph::new(graph.edges().iter().copied().filter(|e| !drop.contains(e)));
    let chart = match ConvexChart::new(problem, &anc, cfg) {
        Ok(c) => c,
        Err(e) => {
            debug!("no ancestor chart for {}: {e}", graph.label(problem));
            return;
        }
    };
    rec.out.params = chart.params.clone();
    for (k, h) in ray_trace_populate(problem, &chart, &drop).into_iter().enumerate() {
        rec.out.evaluated += 1;
        let t = h.realization.transform;
        let ev = evaluate(problem, graph, &chart.params, &t);
        if !ev.feasible() {
            continue;
        }
        rec.feasible_pose(&t);
        let mut witness = false;
        for p in &ev.new_active {
            witness |= rec.hit(*p, &h.values, h.realization.flip, &t);
        }
        rec.out.samples.push(Sample {
            values: h.values.clone(),
            grid: vec![k as u32],
            flips: 1 << h.realization.flip,
            boundary: !ev.new_active.is_empty(),
            refined: true,
            witness,
            pose: None,
        });
    }
}
