//! 3D primitives: rigid transforms, three-sphere intersection, Cayley–Menger
//! determinants and tetrahedral edge bounds, principal axes.

use arrayvec::ArrayVec;
use nalgebra::{Matrix3, Matrix5, SymmetricEigen, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Relative tolerance for geometric predicates; multiply by a length scale.
pub const REL_TOL: f64 = 1e-9;

/// Relative tolerance on squared heights (sphere-intersection discriminant,
/// flattened tetrahedra). Multiply by `scale²`.
pub const REL_TOL_SQ: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("sphere centers are collinear")]
    CollinearCenters,
    #[error("spheres do not intersect")]
    NoIntersection,
    #[error("point set is degenerate (coincident points)")]
    DegeneratePointSet,
}

/// Orientation-preserving isometry `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn translation(t: Vec3) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    /// Rotation by `angle` radians about the (normalized) `axis`, no translation.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        Self::new(*rot.matrix(), Vec3::zeros())
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Orthogonal with determinant +1 within `tol`.
    pub fn is_proper(&self, tol: f64) -> bool {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        ortho <= tol && (r.determinant() - 1.0).abs() <= tol
    }

    /// The unique proper motion taking the frame spanned by `src` onto the frame
    /// spanned by `dst`. The two triangles must be congruent for the result to
    /// map all three points exactly; `None` if either triangle is degenerate.
    pub fn from_point_frames(src: &[Vec3; 3], dst: &[Vec3; 3]) -> Option<RigidTransform> {
        let fs = orthonormal_frame(src)?;
        let fd = orthonormal_frame(dst)?;
        let rotation = fd * fs.transpose();
        let translation = dst[0] - rotation * src[0];
        Some(RigidTransform {
            rotation,
            translation,
        })
    }

    pub fn as_array(&self) -> [f64; 12] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            self.translation.x,
            self.translation.y,
            self.translation.z,
        ]
    }

    pub fn from_array(v: &[f64; 12]) -> RigidTransform {
        RigidTransform {
            rotation: Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]),
            translation: Vec3::new(v[9], v[10], v[11]),
        }
    }
}

fn orthonormal_frame(p: &[Vec3; 3]) -> Option<Matrix3<f64>> {
    let e1 = p[1] - p[0];
    let n1 = e1.norm();
    if n1 == 0.0 {
        return None;
    }
    let e1 = e1 / n1;
    let v = p[2] - p[0];
    let e2 = v - e1 * e1.dot(&v);
    let n2 = e2.norm();
    if n2 <= 1e-14 * v.norm().max(n1) {
        return None;
    }
    let e2 = e2 / n2;
    let e3 = e1.cross(&e2);
    Some(Matrix3::from_columns(&[e1, e2, e3]))
}

/// Angle (radians, in `[0, π]`) of the relative rotation `a⁻¹ b`.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = a.transpose() * b;
    let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos()
}

/// Intersect three spheres. Returns two mirror-image points (the first on the
/// side of `(c2-c1)×(c3-c1)`), or a single point when the configuration is
/// tangent within tolerance.
pub fn intersect_three_spheres(
    c1: &Vec3,
    c2: &Vec3,
    c3: &Vec3,
    r1: f64,
    r2: f64,
    r3: f64,
) -> Result<ArrayVec<Vec3, 2>, GeometryError> {
    let u = c2 - c1;
    let v = c3 - c1;
    let scale = u
        .norm()
        .max(v.norm())
        .max((c3 - c2).norm())
        .max(r1)
        .max(r2)
        .max(r3);
    let normal = u.cross(&v);
    if scale == 0.0 || normal.norm() * 0.5 <= 1e-12 * scale * scale {
        return Err(GeometryError::CollinearCenters);
    }
    let d = u.norm();
    let ex = u / d;
    let i = ex.dot(&v);
    let ey_raw = v - ex * i;
    let j = ey_raw.norm();
    let ey = ey_raw / j;
    let ez = ex.cross(&ey);

    let x = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let y = (r1 * r1 - r3 * r3 + i * i + j * j - 2.0 * i * x) / (2.0 * j);
    let z2 = r1 * r1 - x * x - y * y;
    let tol = REL_TOL_SQ * scale * scale;

    let foot = c1 + ex * x + ey * y;
    let mut out = ArrayVec::new();
    if z2 < -tol {
        return Err(GeometryError::NoIntersection);
    }
    if z2 <= tol {
        out.push(foot);
    } else {
        let z = z2.sqrt();
        out.push(foot + ez * z);
        out.push(foot - ez * z);
    }
    Ok(out)
}

/// Bordered Cayley–Menger determinant of a 4-point simplex from its six
/// squared edge lengths, ordered `(d01, d02, d03, d12, d13, d23)`.
/// Equals `288 V²`: nonnegative exactly when the lengths embed in 3D.
pub fn cayley_menger_det(sq: [f64; 6]) -> f64 {
    let [d01, d02, d03, d12, d13, d23] = sq;
    #[rustfmt::skip]
    let m = Matrix5::new(
        0.0, 1.0, 1.0, 1.0, 1.0,
        1.0, 0.0, d01, d02, d03,
        1.0, d01, 0.0, d12, d13,
        1.0, d02, d12, 0.0, d23,
        1.0, d03, d13, d23, 0.0,
    );
    m.determinant()
}

/// Squared volume of the tetrahedron with the given squared lengths.
pub fn tetra_volume_sq(sq: [f64; 6]) -> f64 {
    cayley_menger_det(sq) / 288.0
}

/// Triangle inequality with absolute slack `tol`.
pub fn triangle_ok(a: f64, b: f64, c: f64, tol: f64) -> bool {
    a + b + tol >= c && a + c + tol >= b && b + c + tol >= a
}

/// Realizable interval for one edge `pq` of a tetrahedron `p,q,r,s` given the
/// other five lengths. The extremes correspond to the two flat positions of
/// the hinge about the opposite edge `rs`. `None` when a face not containing
/// `pq` violates the triangle inequality.
pub fn tetra_edge_range(
    d_rs: f64,
    d_pr: f64,
    d_ps: f64,
    d_qr: f64,
    d_qs: f64,
) -> Option<(f64, f64)> {
    let scale = d_rs.max(d_pr).max(d_ps).max(d_qr).max(d_qs).max(f64::MIN_POSITIVE);
    let tol = REL_TOL * scale;
    let tol_sq = REL_TOL_SQ * scale * scale;
    if d_rs <= tol {
        if (d_pr - d_ps).abs() > tol || (d_qr - d_qs).abs() > tol {
            return None;
        }
        return Some(((d_pr - d_qr).abs(), d_pr + d_qr));
    }
    let place = |a: f64, b: f64| -> Option<(f64, f64)> {
        let x = (a * a - b * b + d_rs * d_rs) / (2.0 * d_rs);
        let h2 = a * a - x * x;
        if h2 < -tol_sq {
            None
        } else {
            Some((x, h2.max(0.0).sqrt()))
        }
    };
    let (xp, hp) = place(d_pr, d_ps)?;
    let (xq, hq) = place(d_qr, d_qs)?;
    let dx2 = (xp - xq) * (xp - xq);
    let lo = (dx2 + (hp - hq) * (hp - hq)).sqrt();
    let hi = (dx2 + (hp + hq) * (hp + hq)).sqrt();
    Some((lo, hi))
}

/// Dominant eigenvector of the centered second-moment matrix, signed so that
/// its first non-negligible component is positive.
pub fn principal_axis(points: &[Vec3]) -> Result<Vec3, GeometryError> {
    if points.len() < 2 {
        return Err(GeometryError::DegeneratePointSet);
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let mut m = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        m += d * d.transpose();
    }
    let spread = m.trace();
    if spread <= 0.0 || !spread.is_finite() {
        return Err(GeometryError::DegeneratePointSet);
    }
    let eig = SymmetricEigen::new(m);
    let k = eig.eigenvalues.imax();
    let mut axis: Vec3 = eig.eigenvectors.column(k).into_owned().normalize();
    if let Some(c) = axis.iter().find(|c| c.abs() > 1e-12) {
        if *c < 0.0 {
            axis = -axis;
        }
    }
    Ok(axis)
}

/// Angle between two axes, folded into `[0, π/2]` since axes carry no sign.
pub fn inter_axis_angle(u: &Vec3, v: &Vec3) -> f64 {
    u.dot(v).abs().clamp(0.0, 1.0).acos()
}

pub fn centroid(points: &[Vec3]) -> Vec3 {
    if points.is_empty() {
        return Vec3::zeros();
    }
    points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / points.len() as f64
}
