//! Populating regions that are not partial 3-trees: drop one or two active
//! edges to reach a partial 3-tree ancestor, then search along rays of the
//! ancestor chart for points where the dropped edges return to their nominal
//! lengths.

use itertools::Itertools;

use super::{bisect, compute_realizations, Realization};
use crate::acg::ActiveConstraintGraph;
use crate::cayley::ConvexChart;
use crate::model::{PairId, Problem};

/// Root-finding tolerance on a ray, relative to the problem scale.
pub const RAY_TOL_REL: f64 = 1e-10;

/// A point of the ancestor chart at which every dropped edge sits at its
/// nominal length.
#[derive(Debug, Clone, PartialEq)]
pub struct RayHit {
    pub values: Vec<f64>,
    pub realization: Realization,
}

/// The first set of one, then two, active edges (in label order) whose
/// removal leaves a partial 3-tree.
pub fn find_drop_set(target: &ActiveConstraintGraph) -> Option<Vec<PairId>> {
    for k in 1..=2 {
        for drop in target.edges().iter().copied().combinations(k) {
            let rest = ActiveConstraintGraph::new(
                target.edges().iter().copied().filter(|e| !drop.contains(e)),
            );
            if rest.is_partial_3tree() {
                return Some(drop);
            }
        }
    }
    None
}

/// Signed offset of a dropped edge from its nominal length.
fn offset(problem: &Problem, r: &Realization, e: PairId) -> f64 {
    problem.dist(&r.transform, e) - problem.active_length(e)
}

fn flip_of(rs: &[Realization], flip: u8) -> Option<Realization> {
    rs.iter().find(|r| r.flip == flip).copied()
}

/// Roots of `offset(e)` along the last chart parameter with the prefix fixed,
/// grouped by flip and ordered along the ray: `(flip, value, realization)`.
fn roots_on_ray(
    problem: &Problem,
    chart: &ConvexChart,
    prefix: &[f64],
    e: PairId,
) -> Vec<(u8, f64, Realization)> {
    let axis = prefix.len();
    let Some((lo, hi)) = chart.parameter_range(axis, prefix) else {
        return Vec::new();
    };
    let tol = RAY_TOL_REL * problem.scale();
    let mut values = prefix.to_vec();
    values.push(lo);
    let sweep = chart.sweep(lo, hi);
    let mut samples: Vec<(f64, Vec<Realization>)> = Vec::with_capacity(sweep.len());
    for v in sweep {
        values[axis] = v;
        samples.push((v, compute_realizations(chart, &values)));
    }
    let mut out = Vec::new();
    for w in samples.windows(2) {
        let (v0, r0) = (&w[0].0, &w[0].1);
        let (v1, r1) = (&w[1].0, &w[1].1);
        for a in r0 {
            let Some(b) = flip_of(r1, a.flip) else {
                continue;
            };
            let (g0, g1) = (offset(problem, a, e), offset(problem, &b, e));
            if (g0 <= 0.0) == (g1 <= 0.0) {
                continue;
            }
            let (good, bad) = if g0 <= 0.0 { (*v0, *v1) } else { (*v1, *v0) };
            let mut vals = values.clone();
            let res = bisect(good, bad, tol, |x| {
                vals[axis] = x;
                let rs = compute_realizations(chart, &vals);
                flip_of(&rs, a.flip).map(|r| offset(problem, &r, e) <= 0.0)
            });
            if let Ok((root, _)) = res {
                vals[axis] = root;
                if let Some(r) = flip_of(&compute_realizations(chart, &vals), a.flip) {
                    out.push((a.flip, root, r));
                }
            }
        }
    }
    out.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
    out
}

/// Search the ancestor chart for points where every edge in `dropped` is at
/// its nominal length. One dropped edge: grid all but the last parameter and
/// root-find along the last. Two dropped edges: grid all but the last two,
/// track the roots of the first edge along the last parameter while stepping
/// the second-to-last, and bisect sign changes of the second edge.
pub fn ray_trace_populate(
    problem: &Problem,
    ancestor: &ConvexChart,
    dropped: &[PairId],
) -> Vec<RayHit> {
    let d = ancestor.dim();
    let m = dropped.len();
    if m == 0 || m > 2 || d < m {
        return Vec::new();
    }
    let mut hits = Vec::new();
    for prefix in ancestor.grid_prefix(d - m) {
        if m == 1 {
            for (_, v, r) in roots_on_ray(problem, ancestor, &prefix.values, dropped[0]) {
                let mut values = prefix.values.clone();
                values.push(v);
                hits.push(RayHit {
                    values,
                    realization: r,
                });
            }
        } else {
            hits.extend(trace_two(problem, ancestor, &prefix.values, dropped[0], dropped[1]));
        }
    }
    hits
}

fn trace_two(
    problem: &Problem,
    chart: &ConvexChart,
    prefix: &[f64],
    e1: PairId,
    e2: PairId,
) -> Vec<RayHit> {
    let axis = prefix.len();
    let Some((lo, hi)) = chart.parameter_range(axis, prefix) else {
        return Vec::new();
    };
    let tol = RAY_TOL_REL * problem.scale();
    let roots_at = |u: f64| {
        let mut p = prefix.to_vec();
        p.push(u);
        roots_on_ray(problem, chart, &p, e1)
    };
    // Root matching between neighbouring rays: same flip, same rank along
    // the ray.
    let ranked = |roots: &[(u8, f64, Realization)]| {
        let mut out: Vec<(u8, usize, f64, Realization)> = Vec::new();
        for (flip, group) in &roots.iter().chunk_by(|r| r.0) {
            for (k, r) in group.enumerate() {
                out.push((flip, k, r.1, r.2));
            }
        }
        out
    };
    let mut hits = Vec::new();
    let us = chart.sweep(lo, hi);
    let mut prev: Option<(f64, Vec<(u8, usize, f64, Realization)>)> = None;
    for u in us {
        let cur = ranked(&roots_at(u));
        if let Some((u0, prev_roots)) = &prev {
            for (flip, k, w0, r0) in prev_roots {
                let Some((_, _, w1, r1)) = cur.iter().find(|c| c.0 == *flip && c.1 == *k) else {
                    continue;
                };
                let (g0, g1) = (offset(problem, r0, e2), offset(problem, r1, e2));
                if (g0 <= 0.0) == (g1 <= 0.0) {
                    continue;
                }
                let (good, bad) = if g0 <= 0.0 { (*u0, u) } else { (u, *u0) };
                let (wg, wb) = if g0 <= 0.0 { (*w0, *w1) } else { (*w1, *w0) };
                let track = |x: f64| -> Option<(f64, Realization)> {
                    // expected root position by linear interpolation
                    let s = if bad != good { (x - good) / (bad - good) } else { 0.0 };
                    let guess = wg + s * (wb - wg);
                    roots_at(x)
                        .into_iter()
                        .filter(|r| r.0 == *flip)
                        .min_by(|a, b| (a.1 - guess).abs().total_cmp(&(b.1 - guess).abs()))
                        .map(|r| (r.1, r.2))
                };
                let res = bisect(good, bad, tol, |x| {
                    track(x).map(|(_, r)| offset(problem, &r, e2) <= 0.0)
                });
                if let Ok((root, _)) = res {
                    if let Some((w, r)) = track(root) {
                        let mut values = prefix.to_vec();
                        values.push(root);
                        values.push(w);
                        hits.push(RayHit {
                            values,
                            realization: r,
                        });
                    }
                }
            }
        }
        prev = Some((u, cur));
    }
    hits
}
