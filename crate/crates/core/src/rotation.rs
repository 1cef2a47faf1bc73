//! SO(3): canonical unit quaternions, parametrizations (quaternion,
//! axis-angle, Euler, 6D), the bi-invariant quaternion metric, random
//! sampling, and analytic Jacobians of `R(theta) . p`.
//!
//! Euler angles are intrinsic Z-Y-X everywhere in this crate.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::UnitPoint;

const DEGENERATE_NORM: f64 = 1e-12;
/// Below this angle the axis-angle trig ratios switch to series.
const SMALL_ANGLE: f64 = 1e-4;

fn quat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Rotates `p` by the unit quaternion `q`: p + 2w(v x p) + 2v x (v x p).
fn quat_rotate(q: &[f64; 4], p: &Vector3<f64>) -> Vector3<f64> {
    let v = Vector3::new(q[1], q[2], q[3]);
    let vp = v.cross(p);
    p + 2.0 * q[0] * vp + 2.0 * v.cross(&vp)
}

/// Derivative of `quat_rotate` w.r.t. each quaternion component, as four
/// 3-vector columns. Valid as the rotation derivative whenever the
/// quaternion perturbation stays tangent to the unit sphere.
fn quat_rotate_jacobian(q: &[f64; 4], p: &Vector3<f64>) -> [Vector3<f64>; 4] {
    let v = Vector3::new(q[1], q[2], q[3]);
    let vp = v.cross(p);
    let d_w = 2.0 * vp;
    let mut cols = [Vector3::zeros(); 4];
    cols[0] = d_w;
    for i in 0..3 {
        let e = Vector3::from_fn(|r, _| if r == i { 1.0 } else { 0.0 });
        cols[i + 1] = 2.0 * q[0] * e.cross(p) + 2.0 * (e.cross(&vp) + v.cross(&e.cross(p)));
    }
    cols
}

/// A rotation stored as a canonical unit quaternion `(w, x, y, z)` with
/// `w >= 0` (`q` and `-q` are the same rotation).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rotation {
    q: [f64; 4],
}

impl TryFrom<[f64; 4]> for Rotation {
    type Error = Error;
    fn try_from(q: [f64; 4]) -> Result<Self> {
        Rotation::from_quaternion(q[0], q[1], q[2], q[3])
    }
}

impl From<Rotation> for [f64; 4] {
    fn from(r: Rotation) -> [f64; 4] {
        r.q
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self {
            q: [1.0, 0.0, 0.0, 0.0],
        }
    }

    /// Normalizes and canonicalizes; fails if the norm is below 1e-12.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < DEGENERATE_NORM {
            return Err(Error::DegenerateParameter(format!(
                "quaternion norm {n} too small"
            )));
        }
        Ok(Self::canonicalize([w / n, x / n, y / n, z / n]))
    }

    fn canonicalize(mut q: [f64; 4]) -> Self {
        let flip = if q[0] != 0.0 {
            q[0] < 0.0
        } else {
            // w = 0: fix the sign of the first non-zero imaginary part.
            match q[1..].iter().find(|c| **c != 0.0) {
                Some(c) => *c < 0.0,
                None => false,
            }
        };
        if flip {
            for c in &mut q {
                *c = -*c;
            }
        }
        Self { q }
    }

    /// Rotation by `angle` radians about `axis`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if n < DEGENERATE_NORM {
            return Err(Error::DegenerateParameter("zero rotation axis".into()));
        }
        let a = axis / n;
        let (s, c) = (angle / 2.0).sin_cos();
        Ok(Self::canonicalize([c, s * a.x, s * a.y, s * a.z]))
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self::canonicalize(matrix_to_quat(m))
    }

    /// Canonical quaternion `(w, x, y, z)` with `w >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        self.q
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let [w, x, y, z] = self.q;
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// `apply(compose(r1, r2), p) == apply(r1, apply(r2, p))`.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Self::canonicalize(quat_mul(&self.q, &other.q))
    }

    pub fn inverse(&self) -> Rotation {
        Self::canonicalize([self.q[0], -self.q[1], -self.q[2], -self.q[3]])
    }

    pub fn apply(&self, p: &UnitPoint) -> UnitPoint {
        UnitPoint::from_vector(quat_rotate(&self.q, &p.vector()))
            .expect("rotation preserves unit norm")
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        quat_rotate(&self.q, v)
    }

    /// Axis-angle vector with angle in [0, pi].
    pub fn to_axis_angle(&self) -> Vector3<f64> {
        let [w, x, y, z] = self.q;
        let v = Vector3::new(x, y, z);
        let s = v.norm();
        if s < DEGENERATE_NORM {
            return 2.0 * v;
        }
        let theta = 2.0 * s.atan2(w);
        (theta / s) * v
    }
}

/// Bi-invariant quaternion metric, `arccos(|q1 . q2|)` in [0, pi/2] radians.
pub fn dist_r(a: &Rotation, b: &Rotation) -> f64 {
    let qa = a.quaternion();
    let qb = b.quaternion();
    let dot: f64 = qa.iter().zip(qb.iter()).map(|(x, y)| x * y).sum();
    dot.abs().clamp(0.0, 1.0).acos()
}

fn matrix_to_quat(m: &Matrix3<f64>) -> [f64; 4] {
    let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        [
            0.25 * s,
            (m[(2, 1)] - m[(1, 2)]) / s,
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(1, 0)] - m[(0, 1)]) / s,
        ]
    } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
        let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
        [
            (m[(2, 1)] - m[(1, 2)]) / s,
            0.25 * s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
        ]
    } else if m[(1, 1)] > m[(2, 2)] {
        let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
        [
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            0.25 * s,
            (m[(1, 2)] + m[(2, 1)]) / s,
        ]
    } else {
        let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
        [
            (m[(1, 0)] - m[(0, 1)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
            (m[(1, 2)] + m[(2, 1)]) / s,
            0.25 * s,
        ]
    }
}

/// Which parametrization a registration optimizes over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Quaternion,
    AxisAngle,
    Euler,
    SixD,
}

impl ParamKind {
    pub fn dim(&self) -> usize {
        match self {
            ParamKind::Quaternion => 4,
            ParamKind::AxisAngle | ParamKind::Euler => 3,
            ParamKind::SixD => 6,
        }
    }
}

impl std::str::FromStr for ParamKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quaternion" => Ok(ParamKind::Quaternion),
            "axis-angle" | "axis_angle" => Ok(ParamKind::AxisAngle),
            "euler" => Ok(ParamKind::Euler),
            "six-d" | "six_d" | "6d" => Ok(ParamKind::SixD),
            other => Err(Error::InvalidConfig(format!(
                "unknown parametrization '{other}'"
            ))),
        }
    }
}

/// Free rotation parameters in one of the four parametrizations.
///
/// Euler stores `[z, y, x]` (intrinsic Z-Y-X); 6D stores two 3-vectors that
/// are Gram-Schmidt orthonormalized into the first two rotation columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RotationParams {
    Quaternion([f64; 4]),
    AxisAngle([f64; 3]),
    Euler([f64; 3]),
    SixD([f64; 6]),
}

impl RotationParams {
    pub fn kind(&self) -> ParamKind {
        match self {
            RotationParams::Quaternion(_) => ParamKind::Quaternion,
            RotationParams::AxisAngle(_) => ParamKind::AxisAngle,
            RotationParams::Euler(_) => ParamKind::Euler,
            RotationParams::SixD(_) => ParamKind::SixD,
        }
    }

    pub fn dim(&self) -> usize {
        self.kind().dim()
    }

    pub fn values(&self) -> &[f64] {
        match self {
            RotationParams::Quaternion(v) => v,
            RotationParams::AxisAngle(v) => v,
            RotationParams::Euler(v) => v,
            RotationParams::SixD(v) => v,
        }
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        match self {
            RotationParams::Quaternion(v) => v,
            RotationParams::AxisAngle(v) => v,
            RotationParams::Euler(v) => v,
            RotationParams::SixD(v) => v,
        }
    }

    pub fn from_slice(kind: ParamKind, v: &[f64]) -> Result<Self> {
        if v.len() != kind.dim() {
            return Err(Error::Shape(format!(
                "{} values for a {}-dimensional parametrization",
                v.len(),
                kind.dim()
            )));
        }
        Ok(match kind {
            ParamKind::Quaternion => RotationParams::Quaternion([v[0], v[1], v[2], v[3]]),
            ParamKind::AxisAngle => RotationParams::AxisAngle([v[0], v[1], v[2]]),
            ParamKind::Euler => RotationParams::Euler([v[0], v[1], v[2]]),
            ParamKind::SixD => RotationParams::SixD([v[0], v[1], v[2], v[3], v[4], v[5]]),
        })
    }

    /// Converts a rotation into this parametrization (axis-angle returns the
    /// representative with angle in [0, pi]).
    pub fn from_rotation(kind: ParamKind, r: &Rotation) -> Self {
        match kind {
            ParamKind::Quaternion => RotationParams::Quaternion(r.quaternion()),
            ParamKind::AxisAngle => {
                let v = r.to_axis_angle();
                RotationParams::AxisAngle([v.x, v.y, v.z])
            }
            ParamKind::Euler => {
                let m = r.to_matrix();
                // R = Rz(a) Ry(b) Rx(c)
                let b = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
                let (a, c) = if m[(2, 0)].abs() < 1.0 - 1e-12 {
                    (m[(1, 0)].atan2(m[(0, 0)]), m[(2, 1)].atan2(m[(2, 2)]))
                } else {
                    // Gimbal lock: fold everything into the z angle.
                    ((-m[(0, 1)]).atan2(m[(1, 1)]), 0.0)
                };
                RotationParams::Euler([a, b, c])
            }
            ParamKind::SixD => {
                let m = r.to_matrix();
                RotationParams::SixD([
                    m[(0, 0)],
                    m[(1, 0)],
                    m[(2, 0)],
                    m[(0, 1)],
                    m[(1, 1)],
                    m[(2, 1)],
                ])
            }
        }
    }

    pub fn to_rotation(&self) -> Result<Rotation> {
        Ok(*self.differential()?.rotation())
    }

    /// The rotation together with the derivative of its construction,
    /// shared across points when differentiating `R(theta) . p`.
    pub fn differential(&self) -> Result<ParamsDifferential> {
        match self {
            RotationParams::Quaternion(raw) => {
                let n = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
                if !n.is_finite() || n < DEGENERATE_NORM {
                    return Err(Error::DegenerateParameter(format!(
                        "quaternion norm {n} too small"
                    )));
                }
                let q = [raw[0] / n, raw[1] / n, raw[2] / n, raw[3] / n];
                // dq/draw_j = (e_j - q q_j) / n
                let dq: Vec<[f64; 4]> = (0..4)
                    .map(|j| {
                        let mut col = [0.0; 4];
                        for i in 0..4 {
                            col[i] = (((i == j) as u8 as f64) - q[i] * q[j]) / n;
                        }
                        col
                    })
                    .collect();
                Ok(ParamsDifferential::quat(q, dq))
            }
            RotationParams::AxisAngle(w) => {
                let omega = Vector3::new(w[0], w[1], w[2]);
                let theta2 = omega.norm_squared();
                let theta = theta2.sqrt();
                let (s, c2, half_cos) = if theta < SMALL_ANGLE {
                    (
                        0.5 - theta2 / 48.0,
                        -1.0 / 24.0 + theta2 / 960.0,
                        1.0 - theta2 / 8.0,
                    )
                } else {
                    let s = (theta / 2.0).sin() / theta;
                    let hc = (theta / 2.0).cos();
                    (s, (0.5 * hc - s) / theta2, hc)
                };
                let q = [half_cos, s * omega.x, s * omega.y, s * omega.z];
                let dq: Vec<[f64; 4]> = (0..3)
                    .map(|j| {
                        let mut col = [0.0; 4];
                        col[0] = -0.5 * s * w[j];
                        for i in 0..3 {
                            col[i + 1] = c2 * w[i] * w[j] + if i == j { s } else { 0.0 };
                        }
                        col
                    })
                    .collect();
                Ok(ParamsDifferential::quat(q, dq))
            }
            RotationParams::Euler(angles) => {
                let half = |t: f64| (t / 2.0).sin_cos();
                let (sa, ca) = half(angles[0]);
                let (sb, cb) = half(angles[1]);
                let (sc, cc) = half(angles[2]);
                let qz = [ca, 0.0, 0.0, sa];
                let qy = [cb, 0.0, sb, 0.0];
                let qx = [cc, sc, 0.0, 0.0];
                let dqz = [-0.5 * sa, 0.0, 0.0, 0.5 * ca];
                let dqy = [-0.5 * sb, 0.0, 0.5 * cb, 0.0];
                let dqx = [-0.5 * sc, 0.5 * cc, 0.0, 0.0];
                let q = quat_mul(&quat_mul(&qz, &qy), &qx);
                let dq = vec![
                    quat_mul(&quat_mul(&dqz, &qy), &qx),
                    quat_mul(&quat_mul(&qz, &dqy), &qx),
                    quat_mul(&quat_mul(&qz, &qy), &dqx),
                ];
                Ok(ParamsDifferential::quat(q, dq))
            }
            RotationParams::SixD(v) => {
                let a = Vector3::new(v[0], v[1], v[2]);
                let c = Vector3::new(v[3], v[4], v[5]);
                let na = a.norm();
                if na < DEGENERATE_NORM {
                    return Err(Error::DegenerateParameter(
                        "6D first vector has zero norm".into(),
                    ));
                }
                let b1 = a / na;
                let u = c - b1.dot(&c) * b1;
                let nu = u.norm();
                if nu < DEGENERATE_NORM {
                    return Err(Error::DegenerateParameter(
                        "6D vectors are parallel".into(),
                    ));
                }
                let b2 = u / nu;
                let b3 = b1.cross(&b2);

                let p1 = (Matrix3::identity() - b1 * b1.transpose()) / na;
                let p2 = (Matrix3::identity() - b2 * b2.transpose()) / nu;
                let du_db1 = -(b1 * c.transpose() + Matrix3::identity() * b1.dot(&c));
                let du_dc = Matrix3::identity() - b1 * b1.transpose();

                let mut cols = Vec::with_capacity(6);
                for j in 0..6 {
                    let e = Vector3::from_fn(|r, _| if r == j % 3 { 1.0 } else { 0.0 });
                    let (db1, du) = if j < 3 {
                        let db1 = p1 * e;
                        (db1, du_db1 * db1)
                    } else {
                        (Vector3::zeros(), du_dc * e)
                    };
                    let db2 = p2 * du;
                    let db3 = db1.cross(&b2) + b1.cross(&db2);
                    cols.push([db1, db2, db3]);
                }
                Ok(ParamsDifferential::six_d([b1, b2, b3], cols))
            }
        }
    }
}

enum DifferentialInner {
    /// Unit quaternion along the construction path (sign preserved so the
    /// path stays continuous) plus tangent columns dq/dtheta.
    Quat { q: [f64; 4], dq: Vec<[f64; 4]> },
    /// Derivatives of the orthonormal basis columns per parameter.
    SixD { dbasis: Vec<[Vector3<f64>; 3]> },
}

/// Rotation plus the differential of its construction from free parameters.
pub struct ParamsDifferential {
    rotation: Rotation,
    inner: DifferentialInner,
}

impl ParamsDifferential {
    fn quat(q: [f64; 4], dq: Vec<[f64; 4]>) -> Self {
        Self {
            rotation: Rotation::canonicalize(q),
            inner: DifferentialInner::Quat { q, dq },
        }
    }

    fn six_d(basis: [Vector3<f64>; 3], dbasis: Vec<[Vector3<f64>; 3]>) -> Self {
        let m = Matrix3::from_columns(&basis);
        Self {
            rotation: Rotation::from_matrix(&m),
            inner: DifferentialInner::SixD { dbasis },
        }
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn dim(&self) -> usize {
        match &self.inner {
            DifferentialInner::Quat { dq, .. } => dq.len(),
            DifferentialInner::SixD { dbasis, .. } => dbasis.len(),
        }
    }

    /// Columns of d(R(theta) . p)/dtheta at a fixed point `p`.
    pub fn point_jacobian(&self, p: &Vector3<f64>) -> Vec<Vector3<f64>> {
        match &self.inner {
            DifferentialInner::Quat { q, dq } => {
                let d = quat_rotate_jacobian(q, p);
                dq.iter()
                    .map(|col| d[0] * col[0] + d[1] * col[1] + d[2] * col[2] + d[3] * col[3])
                    .collect()
            }
            DifferentialInner::SixD { dbasis } => dbasis
                .iter()
                .map(|[db1, db2, db3]| db1 * p.x + db2 * p.y + db3 * p.z)
                .collect(),
        }
    }
}

/// Derivative columns of the rotated point w.r.t. the free parameters.
pub fn rotate_point_jacobian(
    params: &RotationParams,
    p: &UnitPoint,
) -> Result<Vec<Vector3<f64>>> {
    Ok(params.differential()?.point_jacobian(&p.vector()))
}

/// How reset rotations are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationSampling {
    /// Angle uniform in [0, 2*pi], axis a normalized Gaussian vector.
    PaperAxisAngle,
    /// Haar-uniform via a normalized 4-dimensional Gaussian.
    Haar,
}

impl std::str::FromStr for RotationSampling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-axis-angle" | "paper_axis_angle" | "axis-angle" => {
                Ok(RotationSampling::PaperAxisAngle)
            }
            "haar" => Ok(RotationSampling::Haar),
            other => Err(Error::InvalidConfig(format!("unknown sampler '{other}'"))),
        }
    }
}

/// Raw axis/angle draw used by the paper-style sampler: the angle is uniform
/// on [0, 2*pi] before any quaternion folding.
pub fn sample_axis_angle_raw<R: Rng + ?Sized>(rng: &mut R) -> (Vector3<f64>, f64) {
    let angle = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
    let axis = loop {
        let x: f64 = StandardNormal.sample(rng);
        let y: f64 = StandardNormal.sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        let v = Vector3::new(x, y, z);
        let n = v.norm();
        if n > DEGENERATE_NORM {
            break v / n;
        }
    };
    (axis, angle)
}

/// Random rotation in the requested mode. `PaperAxisAngle` is not
/// Haar-uniform; both are provided on purpose.
pub fn sample_rotation<R: Rng + ?Sized>(mode: RotationSampling, rng: &mut R) -> Rotation {
    match mode {
        RotationSampling::PaperAxisAngle => {
            let (axis, angle) = sample_axis_angle_raw(rng);
            Rotation::from_axis_angle(&axis, angle).expect("axis is unit")
        }
        RotationSampling::Haar => loop {
            let w: f64 = StandardNormal.sample(rng);
            let x: f64 = StandardNormal.sample(rng);
            let y: f64 = StandardNormal.sample(rng);
            let z: f64 = StandardNormal.sample(rng);
            if let Ok(r) = Rotation::from_quaternion(w, x, y, z) {
                return r;
            }
        },
    }
}
