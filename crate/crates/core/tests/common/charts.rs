//! Random charts with a known realizing pose, and realizability checks
//! written independently of the chart code.

use cayley_atlas::acg::ActiveConstraintGraph;
use cayley_atlas::cayley::{local_edge, ConvexChart, SamplerConfig};
use cayley_atlas::geometry::{RigidTransform, Vec3};
use cayley_atlas::model::{ConstraintSpec, PairId, Point, PointSet, Problem, Side};
use nalgebra::{Matrix3, Quaternion, UnitQuaternion};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let q = Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

pub fn random_vec(rng: &mut ChaCha8Rng, half: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-half..half),
        rng.random_range(-half..half),
        rng.random_range(-half..half),
    )
}

/// 36·V² of a tetrahedron from its six squared lengths, by the Gram
/// determinant of the edge vectors out of vertex 0. Order: 01 02 03 12 13 23.
pub fn gram_volume(sq: [f64; 6]) -> f64 {
    let [d01, d02, d03, d12, d13, d23] = sq;
    let g = Matrix3::new(
        d01,
        (d01 + d02 - d12) / 2.0,
        (d01 + d03 - d13) / 2.0,
        (d01 + d02 - d12) / 2.0,
        d02,
        (d02 + d03 - d23) / 2.0,
        (d01 + d03 - d13) / 2.0,
        (d02 + d03 - d23) / 2.0,
        d03,
    );
    g.determinant()
}

pub fn triangle(a: f64, b: f64, c: f64, slack: f64) -> bool {
    a + b >= c - slack && a + c >= b - slack && b + c >= a - slack
}

/// Realizability of one tetrahedron from lengths normalized to unit scale.
pub fn tet_oracle(l: [f64; 6], slack: f64) -> bool {
    let [d01, d02, d03, d12, d13, d23] = l;
    let faces = [(d01, d02, d12), (d01, d03, d13), (d02, d03, d23), (d12, d13, d23)];
    faces.iter().all(|&(a, b, c)| triangle(a, b, c, slack)) && gram_volume(l.map(|x| x * x)) >= -slack
}

/// Every tetrahedron of the chart realizable and every parameter within its
/// bounds, with relative slack.
pub fn chart_oracle(chart: &ConvexChart, values: &[f64], scale: f64, slack: f64) -> bool {
    let lens = chart.lengths(values);
    let bounds = values
        .iter()
        .enumerate()
        .all(|(k, v)| *v >= chart.lower[k] - slack * scale && *v <= chart.upper[k] + slack * scale);
    bounds
        && chart.tets.iter().all(|t| {
            let l = |a: usize, b: usize| lens[local_edge(t[a], t[b])] / scale;
            tet_oracle([l(0, 1), l(0, 2), l(0, 3), l(1, 2), l(1, 3), l(2, 3)], slack)
        })
}

pub struct Setup {
    pub problem: Problem,
    pub graph: ActiveConstraintGraph,
    pub pose: RigidTransform,
    pub chart: ConvexChart,
}

pub struct RawSetup {
    pub a: Vec<Vec3>,
    pub b: Vec<Vec3>,
    pub ra: Vec<f64>,
    pub rb: Vec<f64>,
    pub pose: RigidTransform,
    pub graph: ActiveConstraintGraph,
}

pub const LAMBDA: f64 = 0.8;
pub const KAPPA: f64 = 0.25;

pub fn random_triangle(rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    loop {
        let p: Vec<Vec3> = (0..3).map(|_| random_vec(rng, 1.5)).collect();
        if (p[1] - p[0]).cross(&(p[2] - p[0])).norm() > 0.5 {
            return p;
        }
    }
}

pub fn random_raw(rng: &mut ChaCha8Rng, h: usize) -> RawSetup {
    loop {
        let a = random_triangle(rng);
        let b = random_triangle(rng);
        let ra: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..0.3)).collect();
        let rb: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..0.3)).collect();
        let pose = RigidTransform::new(random_rotation(rng), random_vec(rng, 1.0));
        let mut pairs: Vec<PairId> = (0..3).flat_map(|i| (0..3).map(move |j| PairId::new(i, j))).collect();
        pairs.shuffle(rng);
        let graph = ActiveConstraintGraph::new(pairs[..h].iter().copied());
        if graph.is_partial_3tree() {
            return RawSetup { a, b, ra, rb, pose, graph };
        }
    }
}

pub fn dist_raw(raw: &RawSetup, p: PairId) -> f64 {
    (raw.a[p.a] - raw.pose.apply(&raw.b[p.b])).norm()
}

/// Problem in which the raw pose puts every H pair at its interval midpoint.
pub fn build_setup(raw: &RawSetup, extra: &[(PairId, f64)]) -> Option<Setup> {
    let mut spec = ConstraintSpec {
        lambda: LAMBDA,
        kappa: KAPPA,
        ..Default::default()
    };
    for e in raw.graph.edges() {
        let rho = LAMBDA * (raw.ra[e.a] + raw.rb[e.b]);
        let d = dist_raw(raw, *e);
        if d < rho + 0.05 {
            return None;
        }
        spec.delta_overrides.insert(*e, 2.0 * (d - rho));
    }
    for (p, w) in extra {
        spec.delta_overrides.insert(*p, *w);
    }
    let mk = |side, pre: &str, pos: &[Vec3], r: &[f64]| {
        PointSet::new(
            side,
            pos.iter()
                .zip(r)
                .enumerate()
                .map(|(i, (x, r))| Point::new(format!("{pre}{}", i + 1), *x, *r))
                .collect(),
        )
    };
    let a = mk(Side::A, "a", &raw.a, &raw.ra).ok()?;
    let b = mk(Side::B, "b", &raw.b, &raw.rb).ok()?;
    let problem = Problem::new(a, b, spec, vec![], None).ok()?;
    let chart = ConvexChart::new(&problem, &raw.graph, &SamplerConfig::default()).ok()?;
    Some(Setup {
        problem,
        graph: raw.graph.clone(),
        pose: raw.pose,
        chart,
    })
}

pub fn random_setup(rng: &mut ChaCha8Rng, h: usize) -> Setup {
    loop {
        let raw = random_raw(rng, h);
        if let Some(s) = build_setup(&raw, &[]) {
            // the generating pose must lie in the chart
            let inside = s
                .chart
                .params
                .iter()
                .all(|p| s.problem.dist(&s.pose, *p) >= s.problem.rho(*p));
            if inside {
                return s;
            }
        }
    }
}

/// Sequential draw: each parameter uniform in its range given the prefix,
/// kept `margin` (fraction of the width) away from the endpoints.
pub fn draw_point(chart: &ConvexChart, rng: &mut ChaCha8Rng, margin: f64) -> Option<Vec<f64>> {
    let mut v = Vec::with_capacity(chart.dim());
    for i in 0..chart.dim() {
        let (lo, hi) = chart.parameter_range(i, &v)?;
        let u = rng.random_range(margin..=1.0 - margin);
        v.push(lo + (hi - lo) * u);
    }
    Some(v)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}
