//! Cartesian realizations of Cayley points, constraint checks on them, and
//! boundary refinement by bisection.

pub mod raytrace;

use thiserror::Error;

use crate::acg::ActiveConstraintGraph;
use crate::cayley::{local_edge, ConvexChart};
use crate::geometry::{intersect_three_spheres, RigidTransform, Vec3};
use crate::model::{PairId, Problem};

/// Number of sequential tetrahedron placements in a completed chart.
pub const N_TETS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("flip disappeared inside the bracket")]
    BracketLost,
    #[error("bracket endpoints lie on the same side")]
    SameSide,
}

/// One placement of B with A fixed. Bit `t` of `flip` is set when tetrahedron
/// `t` took the solution on the negative side of its oriented base plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Realization {
    pub flip: u8,
    pub transform: RigidTransform,
    /// The three B support points as placed.
    pub b_support: [Vec3; 3],
}

/// Place the B support points tetrahedron by tetrahedron, branching on both
/// sphere-intersection solutions. Branches whose spheres miss are dropped.
/// Results are sorted by flip.
pub fn compute_realizations(chart: &ConvexChart, values: &[f64]) -> Vec<Realization> {
    let lens = chart.lengths(values);
    let mut pos = [Vec3::zeros(); 6];
    pos[..3].copy_from_slice(&chart.a_pos);
    let mut out = Vec::new();
    place(chart, &lens, &mut pos, 0, 0, &mut out);
    out.sort_by_key(|r| r.flip);
    out
}

fn place(
    chart: &ConvexChart,
    lens: &[f64; 15],
    pos: &mut [Vec3; 6],
    t: usize,
    flip: u8,
    out: &mut Vec<Realization>,
) {
    if t == N_TETS {
        let placed = [pos[3], pos[4], pos[5]];
        if let Some(transform) = RigidTransform::from_point_frames(&chart.b_local, &placed) {
            out.push(Realization {
                flip,
                transform,
                b_support: placed,
            });
        }
        return;
    }
    let [b0, b1, b2, apex] = chart.tets[t];
    let r = |b: usize| lens[local_edge(b, apex)];
    let Ok(sols) = intersect_three_spheres(&pos[b0], &pos[b1], &pos[b2], r(b0), r(b1), r(b2))
    else {
        return;
    };
    for (k, p) in sols.iter().enumerate() {
        pos[apex] = *p;
        place(chart, lens, pos, t + 1, flip | ((k as u8) << t), out);
    }
}

/// Position of a pair's distance relative to its interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairState {
    Below,
    Inside,
    Above,
}

pub fn classify(problem: &Problem, p: PairId, dist: f64) -> PairState {
    if problem.is_violated(p, dist) {
        PairState::Below
    } else if problem.is_active(p, dist) {
        PairState::Inside
    } else {
        PairState::Above
    }
}

/// Result of checking one realization against every pair.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Evaluation {
    /// First violated pair outside `H ∪ F`, in scan order.
    pub violated: Option<PairId>,
    pub global_ok: bool,
    /// Pairs outside `H` sitting in their activity interval, in scan order.
    pub new_active: Vec<PairId>,
}

impl Evaluation {
    pub fn feasible(&self) -> bool {
        self.violated.is_none() && self.global_ok
    }
}

pub fn evaluate(
    problem: &Problem,
    graph: &ActiveConstraintGraph,
    params: &[PairId],
    t: &RigidTransform,
) -> Evaluation {
    let bpos = problem.b_positions(t);
    let mut ev = Evaluation {
        global_ok: problem.global_ok(t),
        ..Default::default()
    };
    for p in problem.pairs() {
        if graph.contains(p) {
            continue;
        }
        let d = (problem.a.points[p.a].pos - bpos[p.b]).norm();
        if ev.violated.is_none() && !params.contains(&p) && problem.is_violated(p, d) {
            ev.violated = Some(p);
        }
        if problem.is_active(p, d) {
            ev.new_active.push(p);
        }
    }
    ev
}

/// First pair outside `H ∪ F` closer than its lower bound.
pub fn a_posteriori_violated(
    problem: &Problem,
    graph: &ActiveConstraintGraph,
    params: &[PairId],
    t: &RigidTransform,
) -> Option<PairId> {
    evaluate(problem, graph, params, t).violated
}

/// First pair outside `H` inside its activity interval.
pub fn detect_new_active(
    problem: &Problem,
    graph: &ActiveConstraintGraph,
    t: &RigidTransform,
) -> Option<PairId> {
    evaluate(problem, graph, &[], t).new_active.first().copied()
}

/// Bisection on a predicate that holds at `good` and fails at `bad`.
/// Returns the final `(good, bad)` bracket, at most `tol` wide. `None` from
/// the predicate aborts with [`SearchError::BracketLost`].
pub fn bisect(
    mut good: f64,
    mut bad: f64,
    tol: f64,
    mut pred: impl FnMut(f64) -> Option<bool>,
) -> Result<(f64, f64), SearchError> {
    match (pred(good), pred(bad)) {
        (Some(true), Some(false)) => {}
        (None, _) | (_, None) => return Err(SearchError::BracketLost),
        _ => return Err(SearchError::SameSide),
    }
    for _ in 0..200 {
        if (good - bad).abs() <= tol {
            break;
        }
        let mid = 0.5 * (good + bad);
        match pred(mid) {
            Some(true) => good = mid,
            Some(false) => bad = mid,
            None => return Err(SearchError::BracketLost),
        }
    }
    Ok((good, bad))
}

/// Which end of the activity interval a pair crosses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Onset {
    /// Distance reaches the lower bound: the kept side has `dist >= rho`.
    Lower,
    /// Distance reaches the upper bound: the kept side has `dist <= rho + delta`.
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryHit {
    pub values: Vec<f64>,
    pub pair: PairId,
    pub realization: Realization,
}

/// Relative bracket width for boundary refinement.
pub const BRACKET_REL: f64 = 1e-6;

/// Refine the point where `target` crosses its interval endpoint while
/// parameter `axis` moves from `good_value` (predicate side) to
/// `bad_value`, all other parameters fixed at `values` and the flip held.
#[allow(clippy::too_many_arguments)]
pub fn binary_search_boundary(
    problem: &Problem,
    chart: &ConvexChart,
    values: &[f64],
    axis: usize,
    flip: u8,
    good_value: f64,
    bad_value: f64,
    target: PairId,
    onset: Onset,
) -> Result<BoundaryHit, SearchError> {
    let mut v = values.to_vec();
    let mut at = |x: f64| -> Option<Realization> {
        v[axis] = x;
        compute_realizations(chart, &v)
            .into_iter()
            .find(|r| r.flip == flip)
    };
    let pred = |r: &Realization| {
        let d = problem.dist(&r.transform, target);
        match onset {
            Onset::Lower => d >= problem.rho(target),
            Onset::Upper => d <= problem.rho(target) + problem.delta(target),
        }
    };
    let tol = BRACKET_REL * problem.scale();
    let (good, _) = bisect(good_value, bad_value, tol, |x| at(x).map(|r| pred(&r)))?;
    let realization = at(good).ok_or(SearchError::BracketLost)?;
    let mut out = values.to_vec();
    out[axis] = good;
    Ok(BoundaryHit {
        values: out,
        pair: target,
        realization,
    })
}

/// Rows `[a × b', b' − a]` of the infinitesimal rigidity matrix of the
/// active edges at a pose; returns its numerical rank.
pub fn rigidity_rank(problem: &Problem, graph: &ActiveConstraintGraph, t: &RigidTransform) -> usize {
    let rows = graph.len();
    if rows == 0 {
        return 0;
    }
    let mut m = nalgebra::DMatrix::<f64>::zeros(rows, 6);
    for (r, e) in graph.edges().iter().enumerate() {
        let a = problem.a.points[e.a].pos;
        let b = t.apply(&problem.b.points[e.b].pos);
        let w = a.cross(&b);
        let d = b - a;
        for k in 0..3 {
            m[(r, k)] = w[k];
            m[(r, 3 + k)] = d[k];
        }
    }
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > 1e-9 * max).count()
}
