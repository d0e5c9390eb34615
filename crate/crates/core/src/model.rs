//! Input problem: two labeled point-sets with radii, per-pair distance
//! intervals, feasibility and activity tests, optional global constraints.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::geometry::{inter_axis_angle, principal_axis, RigidTransform, Vec3, REL_TOL};

pub const DEFAULT_LAMBDA: f64 = 0.8;
pub const DEFAULT_KAPPA: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown point label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate point label `{0}`")]
    DuplicateLabel(String),
    #[error("label `{0}` is empty or contains reserved characters")]
    InvalidLabel(String),
    #[error("point-set {0} needs at least 2 points")]
    TooFewPoints(Side),
    #[error("point `{0}` has an invalid radius")]
    InvalidRadius(String),
    #[error("point `{0}` has non-finite coordinates")]
    NonFinite(String),
    #[error("lambda must lie in (0, 1], got {0}")]
    InvalidLambda(f64),
    #[error("kappa must be nonnegative, got {0}")]
    InvalidKappa(f64),
    #[error("interval width for {0} must be nonnegative")]
    InvalidDelta(String),
    #[error("no pair has a positive interval width")]
    NoActiveWidth,
    #[error("angle threshold must lie in (0, pi/2], got {0}")]
    InvalidThreshold(f64),
    #[error("global angle constraint needs non-degenerate point-sets")]
    DegenerateAxis,
    #[error("interest pair `{0}` must join a point of A to a point of B")]
    InvalidInterestPair(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    A,
    B,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::A => write!(f, "A"),
            Side::B => write!(f, "B"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub label: String,
    pub pos: Vec3,
    pub radius: f64,
}

impl Point {
    pub fn new(label: impl Into<String>, pos: Vec3, radius: f64) -> Self {
        Self {
            label: label.into(),
            pos,
            radius,
        }
    }
}

/// Labels end up inside edge labels such as `a1-b2,a3-b1` and in the
/// line-oriented file formats, so separators and whitespace are reserved.
pub fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && !label
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '-' | ',' | ':' | '[' | ']' | '#' | '|'))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub side: Side,
    pub points: Vec<Point>,
}

impl PointSet {
    pub fn new(side: Side, points: Vec<Point>) -> Result<Self, ModelError> {
        if points.len() < 2 {
            return Err(ModelError::TooFewPoints(side));
        }
        for (i, p) in points.iter().enumerate() {
            if !valid_label(&p.label) {
                return Err(ModelError::InvalidLabel(p.label.clone()));
            }
            if !(p.radius >= 0.0) || !p.radius.is_finite() {
                return Err(ModelError::InvalidRadius(p.label.clone()));
            }
            if !p.pos.iter().all(|c| c.is_finite()) {
                return Err(ModelError::NonFinite(p.label.clone()));
            }
            if points[..i].iter().any(|q| q.label == p.label) {
                return Err(ModelError::DuplicateLabel(p.label.clone()));
            }
        }
        Ok(Self { side, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.points.iter().position(|p| p.label == label)
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.pos).collect()
    }
}

/// An inter-set pair, by index into A and B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairId {
    pub a: usize,
    pub b: usize,
}

impl PairId {
    pub fn new(a: usize, b: usize) -> Self {
        Self { a, b }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub lambda: f64,
    pub kappa: f64,
    /// Explicit interval widths by pair, replacing `kappa * (ra + rb)`.
    pub delta_overrides: BTreeMap<PairId, f64>,
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            kappa: DEFAULT_KAPPA,
            delta_overrides: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GlobalConstraint {
    /// Angle between the principal axes of A and B must stay at or below
    /// the threshold (radians).
    InterAxisAngleMax(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InterestSet {
    pub pairs: Vec<PairId>,
}

impl InterestSet {
    pub fn new(mut pairs: Vec<PairId>) -> Self {
        pairs.sort();
        pairs.dedup();
        Self { pairs }
    }

    pub fn contains(&self, p: PairId) -> bool {
        self.pairs.binary_search(&p).is_ok()
    }

    pub fn intersects(&self, edges: &[PairId]) -> bool {
        edges.iter().any(|e| self.contains(*e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeasibilityReport {
    pub violations: Vec<PairId>,
    pub active: Vec<PairId>,
    pub global_ok: bool,
    pub feasible: bool,
}

/// A complete problem instance. Immutable once built.
#[derive(Debug, Clone)]
pub struct Problem {
    pub a: PointSet,
    pub b: PointSet,
    pub spec: ConstraintSpec,
    pub global: Vec<GlobalConstraint>,
    pub interest: Option<InterestSet>,
    rho: Vec<f64>,
    delta: Vec<f64>,
    scale: f64,
    axis_a: Option<Vec3>,
    axis_b: Option<Vec3>,
}

impl Problem {
    pub fn new(
        a: PointSet,
        b: PointSet,
        spec: ConstraintSpec,
        global: Vec<GlobalConstraint>,
        interest: Option<InterestSet>,
    ) -> Result<Self, ModelError> {
        if !(spec.lambda > 0.0 && spec.lambda <= 1.0) {
            return Err(ModelError::InvalidLambda(spec.lambda));
        }
        if !(spec.kappa >= 0.0) || !spec.kappa.is_finite() {
            return Err(ModelError::InvalidKappa(spec.kappa));
        }
        let a = PointSet { side: Side::A, ..a };
        let b = PointSet { side: Side::B, ..b };
        let (na, nb) = (a.len(), b.len());
        for (p, d) in &spec.delta_overrides {
            if p.a >= na || p.b >= nb {
                return Err(ModelError::UnknownLabel(format!("{}:{}", p.a, p.b)));
            }
            if !(*d >= 0.0) || !d.is_finite() {
                return Err(ModelError::InvalidDelta(format!(
                    "{}:{}",
                    a.points[p.a].label, b.points[p.b].label
                )));
            }
        }
        let mut rho = Vec::with_capacity(na * nb);
        let mut delta = Vec::with_capacity(na * nb);
        for pa in &a.points {
            for pb in &b.points {
                rho.push(spec.lambda * (pa.radius + pb.radius));
                delta.push(spec.kappa * (pa.radius + pb.radius));
            }
        }
        for (p, d) in &spec.delta_overrides {
            delta[p.a * nb + p.b] = *d;
        }
        if delta.iter().all(|d| *d <= 0.0) {
            return Err(ModelError::NoActiveWidth);
        }
        for g in &global {
            let GlobalConstraint::InterAxisAngleMax(t) = g;
            if !(*t > 0.0 && *t <= std::f64::consts::FRAC_PI_2) {
                return Err(ModelError::InvalidThreshold(*t));
            }
        }
        if let Some(is) = &interest {
            if let Some(p) = is.pairs.iter().find(|p| p.a >= na || p.b >= nb) {
                return Err(ModelError::InvalidInterestPair(format!("{}:{}", p.a, p.b)));
            }
        }
        let axis_a = principal_axis(&a.positions()).ok();
        let axis_b = principal_axis(&b.positions()).ok();
        if !global.is_empty() && (axis_a.is_none() || axis_b.is_none()) {
            return Err(ModelError::DegenerateAxis);
        }

        let mut scale: f64 = 0.0;
        for set in [&a, &b] {
            for (i, p) in set.points.iter().enumerate() {
                for q in &set.points[i + 1..] {
                    scale = scale.max((p.pos - q.pos).norm());
                }
            }
        }
        for (r, d) in rho.iter().zip(&delta) {
            scale = scale.max(r + d);
        }
        if scale == 0.0 {
            scale = 1.0;
        }

        Ok(Self {
            a,
            b,
            spec,
            global,
            interest,
            rho,
            delta,
            scale,
            axis_a,
            axis_b,
        })
    }

    /// Problem with default interval constants and no global constraints.
    pub fn with_defaults(a: PointSet, b: PointSet) -> Result<Self, ModelError> {
        Self::new(a, b, ConstraintSpec::default(), Vec::new(), None)
    }

    pub fn na(&self) -> usize {
        self.a.len()
    }

    pub fn nb(&self) -> usize {
        self.b.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.na() * self.nb()
    }

    /// All pairs in scan order: A index, then B index.
    pub fn pairs(&self) -> impl Iterator<Item = PairId> + '_ {
        let nb = self.nb();
        (0..self.na()).flat_map(move |a| (0..nb).map(move |b| PairId::new(a, b)))
    }

    fn idx(&self, p: PairId) -> usize {
        p.a * self.nb() + p.b
    }

    pub fn rho(&self, p: PairId) -> f64 {
        self.rho[self.idx(p)]
    }

    pub fn delta(&self, p: PairId) -> f64 {
        self.delta[self.idx(p)]
    }

    /// Nominal fixed length of an active pair: the interval midpoint.
    pub fn active_length(&self, p: PairId) -> f64 {
        self.rho(p) + 0.5 * self.delta(p)
    }

    pub fn rho_by_label(&self, a: &str, b: &str) -> Result<f64, ModelError> {
        Ok(self.rho(self.pair_by_labels(a, b)?))
    }

    pub fn pair_by_labels(&self, a: &str, b: &str) -> Result<PairId, ModelError> {
        let ia = self
            .a
            .index_of(a)
            .ok_or_else(|| ModelError::UnknownLabel(a.to_string()))?;
        let ib = self
            .b
            .index_of(b)
            .ok_or_else(|| ModelError::UnknownLabel(b.to_string()))?;
        Ok(PairId::new(ia, ib))
    }

    /// `a1-b1` style label.
    pub fn pair_label(&self, p: PairId) -> String {
        format!("{}-{}", self.a.points[p.a].label, self.b.points[p.b].label)
    }

    /// Length scale used for tolerances: the largest intra-set distance or
    /// interval upper bound.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn tol(&self) -> f64 {
        REL_TOL * self.scale
    }

    pub fn min_positive_radius(&self) -> Option<f64> {
        self.a
            .points
            .iter()
            .chain(self.b.points.iter())
            .map(|p| p.radius)
            .filter(|r| *r > 0.0)
            .min_by(|x, y| x.total_cmp(y))
    }

    pub fn is_violated(&self, p: PairId, dist: f64) -> bool {
        dist < self.rho(p) - self.tol()
    }

    /// Pairs with zero width are steric-only and never active.
    pub fn is_active(&self, p: PairId, dist: f64) -> bool {
        let d = self.delta(p);
        let t = self.tol();
        d > 0.0 && dist >= self.rho(p) - t && dist <= self.rho(p) + d + t
    }

    pub fn b_positions(&self, t: &RigidTransform) -> Vec<Vec3> {
        self.b.points.iter().map(|p| t.apply(&p.pos)).collect()
    }

    pub fn dist(&self, t: &RigidTransform, p: PairId) -> f64 {
        (self.a.points[p.a].pos - t.apply(&self.b.points[p.b].pos)).norm()
    }

    pub fn global_ok(&self, t: &RigidTransform) -> bool {
        self.global.iter().all(|g| match g {
            GlobalConstraint::InterAxisAngleMax(max) => {
                let (Some(u), Some(v)) = (self.axis_a, self.axis_b) else {
                    return false;
                };
                inter_axis_angle(&u, &(t.rotation * v)) <= *max + 1e-12
            }
        })
    }

    pub fn check_feasible(&self, t: &RigidTransform) -> FeasibilityReport {
        let bpos = self.b_positions(t);
        let mut report = FeasibilityReport {
            global_ok: self.global_ok(t),
            ..Default::default()
        };
        for p in self.pairs() {
            let d = (self.a.points[p.a].pos - bpos[p.b]).norm();
            if self.is_violated(p, d) {
                report.violations.push(p);
            } else if self.is_active(p, d) {
                report.active.push(p);
            }
        }
        report.feasible =
            report.violations.is_empty() && !report.active.is_empty() && report.global_ok;
        report
    }

    pub fn active_pairs(&self, t: &RigidTransform) -> Vec<PairId> {
        let bpos = self.b_positions(t);
        self.pairs()
            .filter(|p| self.is_active(*p, (self.a.points[p.a].pos - bpos[p.b]).norm()))
            .collect()
    }

    /// Distance between the centroid of B (transformed) and that of A.
    pub fn relative_centroid(&self, t: &RigidTransform) -> Vec3 {
        let ca = crate::geometry::centroid(&self.a.positions());
        let cb = crate::geometry::centroid(&self.b_positions(t));
        cb - ca
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(side: Side, pts: &[(&str, [f64; 3], f64)]) -> PointSet {
        PointSet::new(
            side,
            pts.iter()
                .map(|(l, p, r)| Point::new(*l, Vec3::new(p[0], p[1], p[2]), *r))
                .collect(),
        )
        .unwrap()
    }

    fn toy() -> Problem {
        let a = set(Side::A, &[("a1", [0.0, 0.0, 0.0], 1.0), ("a2", [4.0, 0.0, 0.0], 1.0)]);
        let b = set(Side::B, &[("b1", [0.0, 0.0, 0.0], 1.0), ("b2", [0.0, 4.0, 0.0], 1.0)]);
        Problem::with_defaults(a, b).unwrap()
    }

    #[test]
    fn rho_values() {
        let p = toy();
        assert!((p.rho_by_label("a1", "b1").unwrap() - 1.6).abs() < 1e-15);
        assert!(matches!(
            p.rho_by_label("a1", "zz"),
            Err(ModelError::UnknownLabel(_))
        ));
        let a = set(Side::A, &[("a1", [0.0; 3], 1.5), ("a2", [1.0, 0.0, 0.0], 0.0)]);
        let b = set(Side::B, &[("b1", [0.0; 3], 2.5), ("b2", [1.0, 0.0, 0.0], 0.0)]);
        let spec = ConstraintSpec {
            lambda: 1.0,
            ..Default::default()
        };
        let p = Problem::new(a, b, spec, vec![], None).unwrap();
        assert_eq!(p.rho_by_label("a1", "b1").unwrap(), 4.0);
        assert_eq!(p.rho_by_label("a2", "b2").unwrap(), 0.0);
    }

    #[test]
    fn far_away_is_infeasible_without_actives() {
        let p = toy();
        let r = p.check_feasible(&RigidTransform::translation(Vec3::new(100.0, 0.0, 0.0)));
        assert!(r.violations.is_empty());
        assert!(r.active.is_empty());
        assert!(!r.feasible);
    }

    #[test]
    fn single_pair_at_midpoint() {
        let p = toy();
        let pair = p.pair_by_labels("a1", "b1").unwrap();
        let mid = p.active_length(pair);
        // b1 sits at B's origin; move it along -x away from a1
        let t = RigidTransform::translation(Vec3::new(-mid, 0.0, 0.0));
        let r = p.check_feasible(&t);
        assert!(r.feasible);
        assert_eq!(r.active, vec![pair]);
    }

    #[test]
    fn overlap_is_violation() {
        let p = toy();
        let r = p.check_feasible(&RigidTransform::identity());
        assert!(r.violations.contains(&PairId::new(0, 0)));
        assert!(!r.feasible);
    }

    #[test]
    fn boundaries_are_inclusive() {
        let p = toy();
        let pair = PairId::new(0, 0);
        assert!(p.is_active(pair, p.rho(pair)));
        assert!(!p.is_violated(pair, p.rho(pair)));
        assert!(p.is_active(pair, p.rho(pair) + p.delta(pair)));
        assert!(!p.is_active(pair, p.rho(pair) + p.delta(pair) + 1e-6));
    }

    #[test]
    fn zero_width_pairs_never_active() {
        let a = set(Side::A, &[("a1", [0.0; 3], 1.0), ("a2", [4.0, 0.0, 0.0], 1.0)]);
        let b = set(Side::B, &[("b1", [0.0; 3], 1.0), ("b2", [0.0, 4.0, 0.0], 1.0)]);
        let mut spec = ConstraintSpec::default();
        spec.delta_overrides.insert(PairId::new(0, 0), 0.0);
        let p = Problem::new(a, b, spec, vec![], None).unwrap();
        assert!(!p.is_active(PairId::new(0, 0), 1.6));
        assert!(p.is_active(PairId::new(0, 1), 1.6));
    }

    #[test]
    fn rejects_bad_input() {
        let pts = vec![
            Point::new("a1", Vec3::zeros(), 1.0),
            Point::new("a1", Vec3::x(), 1.0),
        ];
        assert!(matches!(
            PointSet::new(Side::A, pts),
            Err(ModelError::DuplicateLabel(_))
        ));
        let pts = vec![Point::new("a-1", Vec3::zeros(), 1.0), Point::new("a2", Vec3::x(), 1.0)];
        assert!(matches!(
            PointSet::new(Side::A, pts),
            Err(ModelError::InvalidLabel(_))
        ));
        assert!(matches!(
            PointSet::new(Side::A, vec![Point::new("a1", Vec3::zeros(), 1.0)]),
            Err(ModelError::TooFewPoints(Side::A))
        ));
        let pts = vec![Point::new("a1", Vec3::zeros(), -1.0), Point::new("a2", Vec3::x(), 1.0)];
        assert!(matches!(
            PointSet::new(Side::A, pts),
            Err(ModelError::InvalidRadius(_))
        ));
    }

    #[test]
    fn angle_constraint() {
        let a = set(Side::A, &[("a1", [0.0; 3], 1.0), ("a2", [4.0, 0.0, 0.0], 1.0)]);
        let b = set(Side::B, &[("b1", [0.0; 3], 1.0), ("b2", [4.0, 0.0, 0.0], 1.0)]);
        let g = vec![GlobalConstraint::InterAxisAngleMax(30f64.to_radians())];
        let p = Problem::new(a, b, ConstraintSpec::default(), g, None).unwrap();
        assert!(p.global_ok(&RigidTransform::identity()));
        let rot = RigidTransform::from_axis_angle(&Vec3::z(), 60f64.to_radians());
        assert!(!p.global_ok(&rot));
        let rot = RigidTransform::from_axis_angle(&Vec3::z(), 170f64.to_radians());
        assert!(p.global_ok(&rot));
    }
}
