//! Convex Cayley charts: sequential parameter ranges from tetrahedral bounds
//! and the nested grid sweep over them.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::acg::{complete_3tree, AcgError, ActiveConstraintGraph, Completion, Vertex};
use crate::geometry::{tetra_edge_range, Vec3};
use crate::model::{PairId, Problem};

/// Step multipliers for the value-dependent variants are clamped to this
/// band around the base step.
pub const STEP_CLAMP: (f64, f64) = (0.1, 10.0);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChartError {
    #[error(transparent)]
    Graph(#[from] AcgError),
    #[error("problem has no point with positive radius to set the step size")]
    NoPositiveRadius,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    /// Constant step.
    #[default]
    Uniform,
    /// Step scales with `midpoint / value`.
    InverseProportional,
    /// Step scales with `value / midpoint`.
    Proportional,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Uniform => "uniform",
            Variant::InverseProportional => "inv",
            Variant::Proportional => "prop",
        })
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Variant::Uniform),
            "inv" => Ok(Variant::InverseProportional),
            "prop" => Ok(Variant::Proportional),
            other => Err(format!("unknown variant `{other}` (expected uniform, inv or prop)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Step as a fraction of the smallest positive input radius.
    pub step: f64,
    pub variant: Variant,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            step: 0.25,
            variant: Variant::Uniform,
        }
    }
}

/// Where an edge length of the completed graph comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeSource {
    /// Intra-set distance or active edge at its nominal length.
    Known(f64),
    /// Cayley parameter by index.
    Param(usize),
}

/// Local vertex numbering: A-slots are 0..3, B-slots 3..6.
pub const N_LOCAL: usize = 6;

/// Index of the unordered local edge `{u, v}` in a 15-entry table.
pub fn local_edge(u: usize, v: usize) -> usize {
    let (u, v) = if u < v { (u, v) } else { (v, u) };
    debug_assert!(u != v && v < N_LOCAL);
    // row offsets for u = 0..5: 0, 5, 9, 12, 14
    u * (2 * N_LOCAL - u - 1) / 2 + (v - u - 1)
}

/// A parameter point with its position in the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CayleyPoint {
    pub values: Vec<f64>,
    pub grid: Vec<u32>,
}

/// Exact convex chart of a partial 3-tree region.
#[derive(Debug, Clone)]
pub struct ConvexChart {
    pub graph: ActiveConstraintGraph,
    pub completion: Completion,
    /// Cayley parameters in sampling order.
    pub params: Vec<PairId>,
    /// Lower bound (C1) per parameter.
    pub lower: Vec<f64>,
    /// Upper bound from an activity interval, for parameters that are
    /// themselves constrained pairs.
    pub upper: Vec<f64>,
    pub edges: [EdgeSource; 15],
    /// Each tetrahedron as local vertex indices: three base vertices, apex.
    pub tets: [[usize; 4]; 3],
    pub a_pos: [Vec3; 3],
    /// Positions of the B support points in B's own frame.
    pub b_local: [Vec3; 3],
    pub base_step: f64,
    pub variant: Variant,
    pub tol: f64,
}

fn local_of(c: &Completion, v: Vertex) -> usize {
    match v {
        Vertex::A(i) => c.a_slots.iter().position(|x| *x == i).unwrap(),
        Vertex::B(j) => 3 + c.b_slots.iter().position(|x| *x == j).unwrap(),
    }
}

impl ConvexChart {
    pub fn new(
        problem: &Problem,
        graph: &ActiveConstraintGraph,
        cfg: &SamplerConfig,
    ) -> Result<Self, ChartError> {
        let completion = complete_3tree(graph, problem)?;
        Self::from_completion(problem, graph, completion, cfg)
    }

    pub fn from_completion(
        problem: &Problem,
        graph: &ActiveConstraintGraph,
        completion: Completion,
        cfg: &SamplerConfig,
    ) -> Result<Self, ChartError> {
        let r_min = problem.min_positive_radius().ok_or(ChartError::NoPositiveRadius)?;
        let a_pos = completion.a_slots.map(|i| problem.a.points[i].pos);
        let b_local = completion.b_slots.map(|j| problem.b.points[j].pos);
        let params = completion.params.clone();

        let mut edges = [EdgeSource::Known(0.0); 15];
        for u in 0..N_LOCAL {
            for v in u + 1..N_LOCAL {
                let src = match (u < 3, v < 3) {
                    (true, true) => EdgeSource::Known((a_pos[u] - a_pos[v]).norm()),
                    (false, false) => EdgeSource::Known((b_local[u - 3] - b_local[v - 3]).norm()),
                    _ => {
                        let e = PairId::new(completion.a_slots[u], completion.b_slots[v - 3]);
                        if let Some(k) = params.iter().position(|p| *p == e) {
                            EdgeSource::Param(k)
                        } else if graph.contains(e) {
                            EdgeSource::Known(problem.active_length(e))
                        } else {
                            // inter edge outside the staircase; unused by any tetrahedron
                            EdgeSource::Known(f64::NAN)
                        }
                    }
                };
                edges[local_edge(u, v)] = src;
            }
        }
        let tets = completion.tets.map(|t| {
            [
                local_of(&completion, t.base[0]),
                local_of(&completion, t.base[1]),
                local_of(&completion, t.base[2]),
                local_of(&completion, t.apex),
            ]
        });
        Ok(Self {
            graph: graph.clone(),
            lower: params.iter().map(|p| problem.rho(*p)).collect(),
            upper: vec![f64::INFINITY; params.len()],
            params,
            completion,
            edges,
            tets,
            a_pos,
            b_local,
            base_step: cfg.step * r_min,
            variant: cfg.variant,
            tol: problem.tol(),
        })
    }

    /// Also intersect the given parameters with their activity intervals.
    pub fn constrain(&mut self, problem: &Problem, pairs: &[PairId]) {
        for (k, p) in self.params.iter().enumerate() {
            if pairs.contains(p) {
                self.upper[k] = problem.rho(*p) + problem.delta(*p);
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    /// Length of a local edge given a (possibly partial) parameter prefix.
    fn length(&self, e: usize, prefix: &[f64]) -> Option<f64> {
        match self.edges[e] {
            EdgeSource::Known(l) => Some(l),
            EdgeSource::Param(k) => prefix.get(k).copied(),
        }
    }

    /// All fifteen local lengths for a full parameter tuple.
    pub fn lengths(&self, values: &[f64]) -> [f64; 15] {
        let mut out = [0.0; 15];
        for (e, src) in self.edges.iter().enumerate() {
            out[e] = match *src {
                EdgeSource::Known(l) => l,
                EdgeSource::Param(k) => values[k],
            };
        }
        out
    }

    /// Realizable interval of parameter `i` with parameters `0..i` fixed to
    /// `prefix`. In each tetrahedron containing the parameter: when it is
    /// the only unfixed length, the exact hinge interval; otherwise the
    /// triangle bounds of faces whose other two edges are known. `None` when
    /// the interval is empty.
    pub fn parameter_range(&self, i: usize, prefix: &[f64]) -> Option<(f64, f64)> {
        debug_assert_eq!(prefix.len(), i);
        let (pu, pv) = self.param_edge(i);
        let mut lo = self.lower[i];
        let mut hi = self.upper[i];
        for tet in &self.tets {
            if !tet.contains(&pu) || !tet.contains(&pv) {
                continue;
            }
            let others: Vec<usize> = tet.iter().copied().filter(|x| *x != pu && *x != pv).collect();
            let (r, s) = (others[0], others[1]);
            let l = |a: usize, b: usize| self.length(local_edge(a, b), prefix);
            let unknown_elsewhere = [(r, s), (pu, r), (pu, s), (pv, r), (pv, s)]
                .iter()
                .any(|&(a, b)| l(a, b).is_none());
            if !unknown_elsewhere {
                let (tlo, thi) = tetra_edge_range(
                    l(r, s)?,
                    l(pu, r)?,
                    l(pu, s)?,
                    l(pv, r)?,
                    l(pv, s)?,
                )?;
                lo = lo.max(tlo);
                hi = hi.min(thi);
            } else {
                for w in [r, s] {
                    if let (Some(x), Some(y)) = (l(pu, w), l(pv, w)) {
                        lo = lo.max((x - y).abs());
                        hi = hi.min(x + y);
                    }
                }
            }
        }
        if lo > hi + self.tol || !lo.is_finite() || !hi.is_finite() {
            return None;
        }
        Some((lo, hi.max(lo)))
    }

    /// Local endpoints of parameter `i`.
    pub fn param_edge(&self, i: usize) -> (usize, usize) {
        for u in 0..N_LOCAL {
            for v in u + 1..N_LOCAL {
                let e = local_edge(u, v);
                if self.edges[e] == EdgeSource::Param(i) {
                    return (u, v);
                }
            }
        }
        unreachable!("parameter {i} has no edge")
    }

    /// The value after `v` in a sweep over `[lo, hi]`, or `None` at the end.
    /// `k` is the index of `v` within the sweep.
    pub fn next_value(&self, v: f64, k: u32, lo: f64, hi: f64) -> Option<f64> {
        let near = self.tol.max(1e-12 * hi.abs());
        if hi - v <= near {
            return None;
        }
        let base = self.base_step;
        let c = 0.5 * (lo + hi);
        let step = match self.variant {
            Variant::Uniform => base,
            Variant::InverseProportional => {
                let m = if v > 0.0 { c / v } else { STEP_CLAMP.1 };
                base * m.clamp(STEP_CLAMP.0, STEP_CLAMP.1)
            }
            Variant::Proportional => {
                let m = if c > 0.0 { v / c } else { 1.0 };
                base * m.clamp(STEP_CLAMP.0, STEP_CLAMP.1)
            }
        };
        let next = match self.variant {
            // index-based to avoid drift from repeated addition
            Variant::Uniform => lo + (k as f64 + 1.0) * base,
            _ => v + step,
        };
        if next >= hi - near {
            Some(hi)
        } else {
            Some(next)
        }
    }

    pub fn grid(&self) -> GridIter<'_> {
        GridIter::new(self, self.dim())
    }

    /// Sweep over the first `depth` parameters only.
    pub fn grid_prefix(&self, depth: usize) -> GridIter<'_> {
        GridIter::new(self, depth.min(self.dim()))
    }

    /// Values of one parameter's sweep over an explicit range.
    pub fn sweep(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = vec![lo];
        let mut v = lo;
        let mut k = 0;
        while let Some(n) = self.next_value(v, k, lo, hi) {
            out.push(n);
            v = n;
            k += 1;
        }
        out
    }

    /// Re-check that a full tuple satisfies every tetrahedral and lower/upper
    /// bound, with absolute slack `slack` on squared-length quantities.
    pub fn is_realizable(&self, values: &[f64], slack: f64) -> bool {
        let lens = self.lengths(values);
        for (k, v) in values.iter().enumerate() {
            if *v < self.lower[k] - slack || *v > self.upper[k] + slack {
                return false;
            }
        }
        self.tets.iter().all(|t| tet_realizable(&lens, t, slack))
    }
}

/// Cayley–Menger and face checks for one local tetrahedron.
pub fn tet_realizable(lens: &[f64; 15], t: &[usize; 4], slack: f64) -> bool {
    let l = |a: usize, b: usize| lens[local_edge(t[a], t[b])];
    let faces = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)];
    for (a, b, c) in faces {
        let (x, y, z) = (l(a, b), l(a, c), l(b, c));
        if !crate::geometry::triangle_ok(x, y, z, slack) {
            return false;
        }
    }
    let sq = [
        l(0, 1).powi(2),
        l(0, 2).powi(2),
        l(0, 3).powi(2),
        l(1, 2).powi(2),
        l(1, 3).powi(2),
        l(2, 3).powi(2),
    ];
    let scale = sq.iter().cloned().fold(0.0, f64::max).max(1e-300);
    crate::geometry::cayley_menger_det(sq) >= -slack * scale * scale * scale
}

/// Nested sweep over a chart: the first parameter outermost. Prefixes whose
/// next range is empty contribute nothing and are counted.
pub struct GridIter<'a> {
    chart: &'a ConvexChart,
    depth: usize,
    ranges: Vec<(f64, f64)>,
    values: Vec<f64>,
    idx: Vec<u32>,
    started: bool,
    done: bool,
    pub empty_prefixes: usize,
}

impl<'a> GridIter<'a> {
    fn new(chart: &'a ConvexChart, d: usize) -> Self {
        Self {
            chart,
            depth: d,
            ranges: vec![(0.0, 0.0); d],
            values: vec![0.0; d],
            idx: vec![0; d],
            started: false,
            done: false,
            empty_prefixes: 0,
        }
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    fn step_level(&mut self, l: usize) -> bool {
        let (lo, hi) = self.ranges[l];
        match self.chart.next_value(self.values[l], self.idx[l], lo, hi) {
            Some(v) => {
                self.values[l] = v;
                self.idx[l] += 1;
                true
            }
            None => false,
        }
    }

    /// Fill levels `level..d` with their first values, backtracking over
    /// empty ranges. `false` once the whole sweep is exhausted.
    fn fill(&mut self, mut level: usize) -> bool {
        let d = self.depth;
        while level < d {
            match self.chart.parameter_range(level, &self.values[..level]) {
                Some((lo, hi)) => {
                    self.ranges[level] = (lo, hi);
                    self.values[level] = lo;
                    self.idx[level] = 0;
                    level += 1;
                }
                None => {
                    self.empty_prefixes += 1;
                    loop {
                        if level == 0 {
                            return false;
                        }
                        level -= 1;
                        if self.step_level(level) {
                            level += 1;
                            break;
                        }
                    }
                }
            }
        }
        true
    }

    fn point(&self) -> CayleyPoint {
        CayleyPoint {
            values: self.values.clone(),
            grid: self.idx.clone(),
        }
    }
}

impl Iterator for GridIter<'_> {
    type Item = CayleyPoint;

    fn next(&mut self) -> Option<CayleyPoint> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            if self.fill(0) {
                return Some(self.point());
            }
            self.done = true;
            return None;
        }
        let mut l = self.depth;
        loop {
            if l == 0 {
                self.done = true;
                return None;
            }
            l -= 1;
            if self.step_level(l) {
                if self.fill(l + 1) {
                    return Some(self.point());
                }
                self.done = true;
                return None;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Point, PointSet, Side};

    #[test]
    fn local_edge_is_a_bijection() {
        let mut seen = [false; 15];
        for u in 0..6 {
            for v in u + 1..6 {
                let e = local_edge(u, v);
                assert!(!seen[e]);
                seen[e] = true;
                assert_eq!(local_edge(v, u), e);
            }
        }
        assert!(seen.iter().all(|x| *x));
    }

    fn unit_problem() -> Problem {
        let s3 = 3f64.sqrt();
        let pts = |side| {
            PointSet::new(
                side,
                vec![
                    Point::new(if side == Side::A { "a1" } else { "b1" }, Vec3::new(0.0, 0.0, 0.0), 0.5),
                    Point::new(if side == Side::A { "a2" } else { "b2" }, Vec3::new(1.0, 0.0, 0.0), 0.5),
                    Point::new(if side == Side::A { "a3" } else { "b3" }, Vec3::new(0.5, s3 / 2.0, 0.0), 0.5),
                ],
            )
            .unwrap()
        };
        Problem::with_defaults(pts(Side::A), pts(Side::B)).unwrap()
    }

    fn test_chart(step: f64, variant: Variant) -> ConvexChart {
        let p = unit_problem();
        let g = ActiveConstraintGraph::new([PairId::new(0, 0)]);
        ConvexChart::new(&p, &g, &SamplerConfig { step, variant }).unwrap()
    }

    #[test]
    fn uniform_sweep_includes_endpoints() {
        let c = test_chart(0.5, Variant::Uniform);
        assert_eq!(c.base_step, 0.25);
        assert_eq!(c.sweep(0.0, 1.0), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(c.sweep(0.0, 0.9), vec![0.0, 0.25, 0.5, 0.75, 0.9]);
        assert_eq!(c.sweep(2.0, 2.0), vec![2.0]);
    }

    #[test]
    fn value_dependent_variants_shift_density() {
        let half_counts = |variant| {
            let c = test_chart(0.1, variant);
            let vals = c.sweep(1.0, 2.0);
            assert_eq!(vals[0], 1.0);
            assert_eq!(*vals.last().unwrap(), 2.0);
            let lower = vals.iter().filter(|v| **v < 1.5).count();
            let upper = vals.iter().filter(|v| **v > 1.5).count();
            (lower, upper)
        };
        let (ul, uu) = half_counts(Variant::Uniform);
        assert!((ul as i64 - uu as i64).abs() <= 1);
        let (il, iu) = half_counts(Variant::InverseProportional);
        assert!(iu > il, "inverse: {il} lower, {iu} upper");
        let (pl, pu) = half_counts(Variant::Proportional);
        assert!(pl > pu, "proportional: {pl} lower, {pu} upper");
    }

    /// Unit triangles on both sides, zero radii except one far point, and
    /// b1 joined to a1 and a2 by active edges of nominal length 1.
    fn hinge_chart() -> (Problem, ConvexChart) {
        let s3 = 3f64.sqrt();
        let tri = |names: [&str; 3]| {
            vec![
                Point::new(names[0], Vec3::new(0.0, 0.0, 0.0), 0.0),
                Point::new(names[1], Vec3::new(1.0, 0.0, 0.0), 0.0),
                Point::new(names[2], Vec3::new(0.5, s3 / 2.0, 0.0), 0.0),
            ]
        };
        let mut a = tri(["a1", "a2", "a3"]);
        a.push(Point::new("a4", Vec3::new(50.0, 0.0, 0.0), 1.0));
        let a = PointSet::new(Side::A, a).unwrap();
        let b = PointSet::new(Side::B, tri(["b1", "b2", "b3"])).unwrap();
        let mut spec = crate::model::ConstraintSpec::default();
        spec.delta_overrides.insert(PairId::new(0, 0), 2.0);
        spec.delta_overrides.insert(PairId::new(1, 0), 2.0);
        let p = Problem::new(a, b, spec, vec![], None).unwrap();
        let g = ActiveConstraintGraph::new([PairId::new(0, 0), PairId::new(1, 0)]);
        let c = ConvexChart::new(&p, &g, &SamplerConfig::default()).unwrap();
        (p, c)
    }

    #[test]
    fn unit_hinge_parameter_range() {
        let (_, c) = hinge_chart();
        assert_eq!(c.params[0], PairId::new(2, 0));
        let (lo, hi) = c.parameter_range(0, &[]).unwrap();
        assert!(lo.abs() < 1e-9, "{lo}");
        assert!((hi - 3f64.sqrt()).abs() < 1e-9, "{hi}");

        let mut c2 = c.clone();
        c2.lower[0] = 1.6;
        c2.upper[0] = 1.8;
        let (lo, hi) = c2.parameter_range(0, &[]).unwrap();
        assert_eq!(lo, 1.6);
        assert!((hi - 3f64.sqrt()).abs() < 1e-9);

        c2.lower[0] = 1.8;
        c2.upper[0] = 2.0;
        assert!(c2.parameter_range(0, &[]).is_none());
    }

    #[test]
    fn face_violation_gives_empty_range() {
        let (_, mut c) = hinge_chart();
        // stretch the active edge b1-a1 far beyond a1-a2 + b1-a2
        let e = local_edge(
            c.completion.a_slots.iter().position(|x| *x == 0).unwrap(),
            3,
        );
        c.edges[e] = EdgeSource::Known(10.0);
        assert!(c.parameter_range(0, &[]).is_none());
    }

    #[test]
    fn grid_points_stay_in_ranges() {
        let c = test_chart(0.5, Variant::Uniform);
        let mut n = 0;
        for p in c.grid() {
            n += 1;
            assert_eq!(p.values.len(), 5);
            for i in 0..5 {
                let (lo, hi) = c.parameter_range(i, &p.values[..i]).unwrap();
                assert!(p.values[i] >= lo - 1e-12 && p.values[i] <= hi + 1e-12);
            }
            assert!(c.is_realizable(&p.values, 1e-9));
        }
        assert!(n > 0);
    }

    #[test]
    fn grid_of_rigid_chart_is_one_point() {
        let p = unit_problem();
        let g = ActiveConstraintGraph::new([
            PairId::new(0, 0),
            PairId::new(1, 0),
            PairId::new(2, 0),
            PairId::new(0, 1),
            PairId::new(1, 1),
            PairId::new(0, 2),
        ]);
        let c = ConvexChart::new(&p, &g, &SamplerConfig::default()).unwrap();
        let pts: Vec<_> = c.grid().collect();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].values.is_empty());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("inv".parse::<Variant>().unwrap(), Variant::InverseProportional);
        assert_eq!(Variant::Proportional.to_string(), "prop");
        assert!("x".parse::<Variant>().is_err());
    }
}
