//! Rigid transforms, Euler ZYX pose composition and Denavit-Hartenberg links.
//!
//! Everything here is generic over [`Real`] so the same code runs on `f64` and
//! on dual numbers when derivatives are needed.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WristError};
use crate::{lit, Real};

/// Tolerance on `|cos(alpha_y)|` below which Euler extraction is refused.
pub const GIMBAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Rotation,
    Translation,
}

/// Rigid transform stored as a rotation and a translation (mm).
///
/// The homogeneous last row `[0 0 0 1]` is implicit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousTransform<T: Real = f64> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> HomogeneousTransform<T> {
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_rotation(rotation: Matrix3<T>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self::new(Matrix3::identity(), translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

impl HomogeneousTransform<f64> {
    /// Builds a transform from a 4×4 matrix, checking the rigid-body invariants.
    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        let t = Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        );
        let last = m.fixed_view::<1, 4>(3, 0);
        if (last[0].abs() + last[1].abs() + last[2].abs() + (last[3] - 1.0).abs()) > 1e-12 {
            return Err(WristError::InvalidArgument(
                "homogeneous matrix last row must be [0 0 0 1]".into(),
            ));
        }
        if !t.is_rigid(1e-10) {
            return Err(WristError::InvalidArgument(
                "rotation block is not a proper orthonormal matrix".into(),
            ));
        }
        Ok(t)
    }

    /// `RᵀR = I` and `det R = +1`, both within `tol`.
    pub fn is_rigid(&self, tol: f64) -> bool {
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        let det = (self.rotation.determinant() - 1.0).abs();
        ortho <= tol && det <= tol && self.translation.iter().all(|v| v.is_finite())
    }

    /// Translation distance and rotation angle between two transforms.
    pub fn distance(&self, other: &Self) -> (f64, f64) {
        let dp = (self.translation - other.translation).norm();
        (dp, rotation_angle(&(self.rotation.transpose() * other.rotation)))
    }
}

impl<T: Real> Mul for HomogeneousTransform<T> {
    type Output = HomogeneousTransform<T>;

    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.rotation * rhs.rotation,
            self.rotation * rhs.translation + self.translation,
        )
    }
}

impl<'a, T: Real> Mul<&'a HomogeneousTransform<T>> for &'a HomogeneousTransform<T> {
    type Output = HomogeneousTransform<T>;

    fn mul(self, rhs: Self) -> HomogeneousTransform<T> {
        *self * *rhs
    }
}

/// Angle of a rotation matrix, robust near zero and π.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let v = vee_skew(r);
    let s = v.norm();
    let c = (r.trace() - 1.0) * 0.5;
    s.atan2(c)
}

/// `vee((R − Rᵀ)/2)`: the `sin θ · axis` vector of a rotation.
pub fn vee_skew<T: Real>(r: &Matrix3<T>) -> Vector3<T> {
    let half: T = lit(0.5);
    Vector3::new(
        (r[(2, 1)] - r[(1, 2)]) * half,
        (r[(0, 2)] - r[(2, 0)]) * half,
        (r[(1, 0)] - r[(0, 1)]) * half,
    )
}

pub fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v.z, v.y, v.z, z, -v.x, -v.y, v.x, z)
}

pub fn rot_x<T: Real>(angle: T) -> Matrix3<T> {
    let (s, c) = (angle.sin(), angle.cos());
    let (o, z) = (T::one(), T::zero());
    Matrix3::new(o, z, z, z, c, -s, z, s, c)
}

pub fn rot_y<T: Real>(angle: T) -> Matrix3<T> {
    let (s, c) = (angle.sin(), angle.cos());
    let (o, z) = (T::one(), T::zero());
    Matrix3::new(c, z, s, z, o, z, -s, z, c)
}

pub fn rot_z<T: Real>(angle: T) -> Matrix3<T> {
    let (s, c) = (angle.sin(), angle.cos());
    let (o, z) = (T::one(), T::zero());
    Matrix3::new(c, -s, z, s, c, z, z, z, o)
}

fn axis_rotation<T: Real>(axis: Axis, angle: T) -> Matrix3<T> {
    match axis {
        Axis::X => rot_x(angle),
        Axis::Y => rot_y(angle),
        Axis::Z => rot_z(angle),
    }
}

fn axis_vector<T: Real>(axis: Axis, p: T) -> Vector3<T> {
    let z = T::zero();
    match axis {
        Axis::X => Vector3::new(p, z, z),
        Axis::Y => Vector3::new(z, p, z),
        Axis::Z => Vector3::new(z, z, p),
    }
}

/// Single-axis rotation (rad) or translation (mm), without input checks.
pub fn elementary<T: Real>(axis: Axis, kind: TransformKind, p: T) -> HomogeneousTransform<T> {
    match kind {
        TransformKind::Rotation => HomogeneousTransform::from_rotation(axis_rotation(axis, p)),
        TransformKind::Translation => HomogeneousTransform::from_translation(axis_vector(axis, p)),
    }
}

/// Single-axis rotation (rad) or translation (mm).
pub fn elementary_transform(axis: Axis, kind: TransformKind, p: f64) -> Result<HomogeneousTransform> {
    if !p.is_finite() {
        return Err(WristError::InvalidArgument(format!(
            "elementary transform parameter must be finite, got {p}"
        )));
    }
    Ok(elementary(axis, kind, p))
}

/// Wraps an angle into `(−π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Coupler pose: Euler ZYX angles (rad) followed by the position of `O_c` (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseVector<T: Real = f64> {
    pub alpha_x: T,
    pub alpha_y: T,
    pub alpha_z: T,
    pub x_c: T,
    pub y_c: T,
    pub z_c: T,
}

impl<T: Real> PoseVector<T> {
    pub fn new(alpha_x: T, alpha_y: T, alpha_z: T, x_c: T, y_c: T, z_c: T) -> Self {
        Self {
            alpha_x,
            alpha_y,
            alpha_z,
            x_c,
            y_c,
            z_c,
        }
    }

    pub fn position(&self) -> Vector3<T> {
        Vector3::new(self.x_c, self.y_c, self.z_c)
    }

    pub fn rotation(&self) -> Matrix3<T> {
        rot_z(self.alpha_z) * rot_y(self.alpha_y) * rot_x(self.alpha_x)
    }
}

impl PoseVector<f64> {
    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.alpha_x,
            self.alpha_y,
            self.alpha_z,
            self.x_c,
            self.y_c,
            self.z_c,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// `T_Tz(z_c)·T_Ty(y_c)·T_Tx(x_c)·T_Rz(α_z)·T_Ry(α_y)·T_Rx(α_x)`.
///
/// The three translations commute, so the product collapses to a rotation
/// `Rz·Ry·Rx` with translation `(x_c, y_c, z_c)`.
pub fn pose_to_transform<T: Real>(x: &PoseVector<T>) -> HomogeneousTransform<T> {
    HomogeneousTransform::new(x.rotation(), x.position())
}

/// Inverse of [`pose_to_transform`] on the principal branch `α_y ∈ [−π/2, π/2]`.
pub fn transform_to_pose(t: &HomogeneousTransform) -> Result<PoseVector> {
    let r = &t.rotation;
    let sin_pitch = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let cos_pitch = (r[(0, 0)].powi(2) + r[(1, 0)].powi(2)).sqrt();
    if cos_pitch <= GIMBAL_TOLERANCE {
        return Err(WristError::DegenerateOrientation { cos_pitch });
    }
    let alpha_y = sin_pitch.atan2(cos_pitch);
    let alpha_x = r[(2, 1)].atan2(r[(2, 2)]);
    let alpha_z = r[(1, 0)].atan2(r[(0, 0)]);
    Ok(PoseVector::new(
        normalize_angle(alpha_x),
        normalize_angle(alpha_y),
        normalize_angle(alpha_z),
        t.translation.x,
        t.translation.y,
        t.translation.z,
    ))
}

/// One row of a Denavit-Hartenberg table: joint offset, link offset, link
/// length and link twist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DHRow {
    pub theta: f64,
    pub d: f64,
    pub a: f64,
    pub alpha: f64,
}

impl DHRow {
    pub const fn new(theta: f64, d: f64, a: f64, alpha: f64) -> Self {
        Self { theta, d, a, alpha }
    }
}

/// `Rz(θ + q)·Tz(d)·Rx(α)·Tx(a)`.
pub fn dh_transform<T: Real>(row: &DHRow, q: T) -> HomogeneousTransform<T> {
    let theta = q + lit::<T>(row.theta);
    let rz = rot_z(theta);
    let rx = rot_x(lit::<T>(row.alpha));
    // Tz(d) then Rx(α) then Tx(a): the x-translation is along the new x axis,
    // which Rx leaves unchanged.
    let z_axis = Vector3::new(T::zero(), T::zero(), lit(row.d));
    let x_axis = Vector3::new(lit(row.a), T::zero(), T::zero());
    let rotation = rz * rx;
    let translation = rz * z_axis + rz * x_axis;
    HomogeneousTransform::new(rotation, translation)
}
