//! Coverage metrics over a Cartesian comparison grid, and a Metropolis
//! Monte Carlo baseline sampler.

use std::collections::HashMap;

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::acg::AMBIENT_DIM;
use crate::atlas::Atlas;
use crate::geometry::{centroid, rotation_angle_between, RigidTransform, Vec3};
use crate::model::Problem;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("counts must be positive")]
    ZeroCount,
    #[error("denominator is zero")]
    ZeroDenominator,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no feasible starting pose found")]
    NoStart,
}

/// A pose reduced to what the metrics use: the centroid of B relative to the
/// centroid of A, B's orientation, and the dimension of the source region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianSample {
    pub centroid: Vec3,
    pub rotation: Matrix3<f64>,
    pub dim: usize,
}

impl CartesianSample {
    pub fn from_pose(problem: &Problem, t: &RigidTransform, dim: usize) -> Self {
        Self {
            centroid: problem.relative_centroid(t),
            rotation: t.rotation,
            dim,
        }
    }
}

/// `(g / s)^(1/6) / 2`.
pub fn epsilon(grid_points: usize, sample_points: usize) -> Result<f64, CoverageError> {
    if grid_points == 0 || sample_points == 0 {
        return Err(CoverageError::ZeroCount);
    }
    // sqrt then cbrt keeps exact powers of two exact
    Ok((grid_points as f64 / sample_points as f64).sqrt().cbrt() / 2.0)
}

/// `s1 / s2 × 100`.
pub fn ratio_percentage(s1: usize, s2: usize) -> Result<f64, CoverageError> {
    if s2 == 0 {
        return Err(CoverageError::ZeroDenominator);
    }
    Ok(s1 as f64 / s2 as f64 * 100.0)
}

/// Weight of a sample from a region of dimension `dim`: `6 − dim`.
pub fn multigrid_weight(dim: usize) -> usize {
    AMBIENT_DIM.saturating_sub(dim)
}

pub fn multigrid_weights(samples: &[CartesianSample]) -> Vec<usize> {
    samples.iter().map(|s| multigrid_weight(s.dim)).collect()
}

/// Distance on poses: translation distance plus rotation angle times a
/// length scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMetric {
    pub rot_scale: f64,
}

impl PoseMetric {
    /// Scale rotations by the radius of gyration of B.
    pub fn for_problem(problem: &Problem) -> Self {
        let pts = problem.b.positions();
        let c = centroid(&pts);
        let rg = (pts.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / pts.len() as f64).sqrt();
        Self { rot_scale: rg }
    }

    pub fn dist(&self, a: &CartesianSample, b: &CartesianSample) -> f64 {
        (a.centroid - b.centroid).norm() + self.rot_scale * rotation_angle_between(&a.rotation, &b.rotation)
    }
}

/// Grid in the 6D pose space: a translation lattice times a set of
/// orientations.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonGrid {
    pub lo: Vec3,
    pub hi: Vec3,
    /// Lattice points per translation axis.
    pub resolution: usize,
    /// Rotation vectors per axis of the cube `[−π, π]³`, kept inside the ball.
    pub rot_resolution: usize,
}

impl Default for ComparisonGrid {
    fn default() -> Self {
        Self {
            lo: Vec3::new(-20.0, -20.0, -3.5),
            hi: Vec3::new(20.0, 20.0, 3.5),
            resolution: 10,
            rot_resolution: 4,
        }
    }
}

impl ComparisonGrid {
    /// A cube around A that holds every centroid offset with a pair active.
    pub fn for_problem(problem: &Problem, resolution: usize, rot_resolution: usize) -> Self {
        let r = reach(problem);
        Self {
            lo: Vec3::repeat(-r),
            hi: Vec3::repeat(r),
            resolution,
            rot_resolution,
        }
    }

    fn validate(&self) -> Result<(), CoverageError> {
        if self.resolution == 0 || self.rot_resolution == 0 {
            return Err(CoverageError::InvalidGrid("resolution must be positive".into()));
        }
        if !(0..3).all(|k| self.lo[k].is_finite() && self.hi[k].is_finite() && self.lo[k] <= self.hi[k]) {
            return Err(CoverageError::InvalidGrid("bounds must be finite and ordered".into()));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![(lo + hi) / 2.0];
        }
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    /// Largest lattice step over the translation axes; `epsilon` is in
    /// these units.
    pub fn spacing(&self) -> f64 {
        if self.resolution < 2 {
            return (0..3).map(|k| self.hi[k] - self.lo[k]).fold(0.0, f64::max).max(1.0);
        }
        (0..3).map(|k| (self.hi[k] - self.lo[k]) / (self.resolution - 1) as f64).fold(0.0, f64::max)
    }

    pub fn rotations(&self) -> Vec<Matrix3<f64>> {
        let pi = std::f64::consts::PI;
        let ax = Self::axis(-pi, pi, self.rot_resolution);
        let mut out = Vec::new();
        for &x in &ax {
            for &y in &ax {
                for &z in &ax {
                    let v = Vec3::new(x, y, z);
                    if v.norm() <= pi {
                        out.push(*Rotation3::new(v).matrix());
                    }
                }
            }
        }
        if out.is_empty() {
            out.push(Matrix3::identity());
        }
        out
    }

    pub fn points(&self) -> Result<Vec<CartesianSample>, CoverageError> {
        self.validate()?;
        let axes: Vec<Vec<f64>> = (0..3).map(|k| Self::axis(self.lo[k], self.hi[k], self.resolution)).collect();
        let rots = self.rotations();
        let mut out = Vec::with_capacity(self.resolution.pow(3) * rots.len());
        for &x in &axes[0] {
            for &y in &axes[1] {
                for &z in &axes[2] {
                    for r in &rots {
                        out.push(CartesianSample {
                            centroid: Vec3::new(x, y, z),
                            rotation: *r,
                            dim: AMBIENT_DIM,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

impl ComparisonGrid {
    /// Grid points whose pose is clash free, passes the global constraints
    /// and brings some pair within `slack` of its upper bound.
    pub fn near_feasible_points(&self, problem: &Problem, slack: f64) -> Result<Vec<CartesianSample>, CoverageError> {
        let ca = centroid(&problem.a.positions());
        let cb = centroid(&problem.b.positions());
        let mut pts = self.points()?;
        pts.retain(|g| {
            let t = RigidTransform::new(g.rotation, ca + g.centroid - g.rotation * cb);
            if !problem.global_ok(&t) {
                return false;
            }
            let mut near = false;
            for p in problem.pairs() {
                let d = problem.dist(&t, p);
                if problem.is_violated(p, d) {
                    return false;
                }
                near |= problem.delta(p) > 0.0 && d <= problem.rho(p) + problem.delta(p) + slack;
            }
            near
        });
        Ok(pts)
    }
}

/// Largest centroid offset at which some pair can still be active.
fn reach(problem: &Problem) -> f64 {
    let spread = |pts: &[Vec3]| {
        let c = centroid(pts);
        pts.iter().map(|p| (p - c).norm()).fold(0.0, f64::max)
    };
    let contact = problem.pairs().map(|p| problem.rho(p) + problem.delta(p)).fold(0.0, f64::max);
    contact + spread(&problem.a.positions()) + spread(&problem.b.positions())
}

/// Percentage of grid points with a sample within `eps`.
pub fn coverage_percentage(
    samples: &[CartesianSample],
    grid: &[CartesianSample],
    eps: f64,
    metric: &PoseMetric,
) -> f64 {
    if grid.is_empty() {
        return 0.0;
    }
    let covered = covered_flags(samples, grid, eps, metric).iter().filter(|c| **c).count();
    covered as f64 / grid.len() as f64 * 100.0
}

/// Per grid point, whether a sample lies within `eps`.
pub fn covered_flags(samples: &[CartesianSample], grid: &[CartesianSample], eps: f64, metric: &PoseMetric) -> Vec<bool> {
    // translation distance alone bounds the metric, so bucket by it
    let cell = if eps > 0.0 { eps } else { 1.0 };
    let key = |v: &Vec3| {
        (
            (v.x / cell).floor() as i64,
            (v.y / cell).floor() as i64,
            (v.z / cell).floor() as i64,
        )
    };
    let mut buckets: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        buckets.entry(key(&s.centroid)).or_default().push(i);
    }
    grid.iter()
        .map(|g| {
            let (kx, ky, kz) = key(&g.centroid);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(ids) = buckets.get(&(kx + dx, ky + dy, kz + dz)) {
                            if ids.iter().any(|i| metric.dist(&samples[*i], g) <= eps) {
                                return true;
                            }
                        }
                    }
                }
            }
            false
        })
        .collect()
}

/// Counts of sample centroids per `cell_size` square of the xy plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2D {
    pub x0: f64,
    pub y0: f64,
    pub cell: f64,
    /// `counts[iy][ix]`.
    pub counts: Vec<Vec<u64>>,
}

/// Bin centroid x and y over `[lo, hi]` per axis; samples outside are dropped.
pub fn project_xy(samples: &[CartesianSample], cell_size: f64, lo: (f64, f64), hi: (f64, f64)) -> Histogram2D {
    let n = |a: f64, b: f64| (((b - a) / cell_size).ceil() as usize).max(1);
    let (nx, ny) = (n(lo.0, hi.0), n(lo.1, hi.1));
    let mut counts = vec![vec![0u64; nx]; ny];
    for s in samples {
        let fx = (s.centroid.x - lo.0) / cell_size;
        let fy = (s.centroid.y - lo.1) / cell_size;
        if fx < 0.0 || fy < 0.0 {
            continue;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        if ix < nx && iy < ny {
            counts[iy][ix] += 1;
        }
    }
    Histogram2D {
        x0: lo.0,
        y0: lo.1,
        cell: cell_size,
        counts,
    }
}

/// Every feasible pose stored in an atlas, in node and sample order.
pub fn atlas_samples(atlas: &Atlas) -> Vec<CartesianSample> {
    let problem = atlas.problem();
    let mut out = Vec::new();
    for node in atlas.nodes() {
        if node.samples.is_empty() {
            continue;
        }
        let chart = node.chart(problem);
        for s in &node.samples {
            for (_, t) in node.poses(chart.as_ref(), s) {
                out.push(CartesianSample::from_pose(problem, &t, node.dim()));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub iterations: usize,
    /// Standard deviation of the translation step; the rotation step uses
    /// the same length at the radius of gyration of B.
    pub proposal_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct McRun {
    /// One entry per iteration: the chain state after the step.
    pub samples: Vec<CartesianSample>,
    pub accepted: usize,
}

impl McRun {
    pub fn acceptance_rate(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.accepted as f64 / self.samples.len() as f64
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let q = nalgebra::Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

/// A uniformly random pose of B with its centroid within `radius` of A's.
pub fn random_pose(problem: &Problem, radius: f64, rng: &mut ChaCha8Rng) -> RigidTransform {
    let ca = centroid(&problem.a.positions());
    let cb = centroid(&problem.b.positions());
    let r = random_rotation(rng);
    let u = loop {
        let v = Vec3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        if v.norm_squared() <= 1.0 {
            break v * radius;
        }
    };
    RigidTransform::new(r, ca + u - r * cb)
}

/// Metropolis chain over poses with energy `−(active pairs)` at unit
/// temperature. Proposals that violate a pair, break a global constraint or
/// leave no pair active are rejected.
pub fn mc_baseline(problem: &Problem, cfg: &McConfig) -> Result<McRun, CoverageError> {
    let mut run = McRun::default();
    if cfg.iterations == 0 {
        return Ok(run);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let radius = reach(problem);
    let start = (0..1_000_000)
        .map(|_| random_pose(problem, radius, &mut rng))
        .find(|t| problem.check_feasible(t).feasible)
        .ok_or(CoverageError::NoStart)?;
    let rg = PoseMetric::for_problem(problem).rot_scale.max(f64::MIN_POSITIVE);
    let cb = centroid(&problem.b.positions());
    let mut cur = start;
    let mut energy = -(problem.active_pairs(&cur).len() as f64);
    for _ in 0..cfg.iterations {
        let step = Vec3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ) * cfg.proposal_scale;
        let axis = Vec3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let angle = rng.sample::<f64, _>(StandardNormal) * cfg.proposal_scale / rg;
        let u: f64 = rng.random();
        let rot = match Unit::try_new(axis, 1e-12) {
            Some(a) if angle != 0.0 => *Rotation3::from_axis_angle(&a, angle).matrix(),
            _ => Matrix3::identity(),
        };
        // rotate about B's current centroid, then translate
        let c = cur.apply(&cb);
        let next = RigidTransform::new(rot * cur.rotation, rot * (cur.translation - c) + c + step);
        let report = problem.check_feasible(&next);
        if report.feasible {
            let e = -(report.active.len() as f64);
            if e <= energy || u < (energy - e).exp() {
                cur = next;
                energy = e;
                run.accepted += 1;
            }
        }
        let dim = AMBIENT_DIM.saturating_sub(-energy as usize);
        run.samples.push(CartesianSample::from_pose(problem, &cur, dim));
    }
    Ok(run)
}
