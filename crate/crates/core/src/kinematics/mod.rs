//! Leg kinematics, the loop-closure pose map and the mechanism Jacobians.
//!
//! Each leg is a serial chain of four revolute joints. The legs are
//! distributed around the wrist's longitudinal axis `X_b` at
//! `eta + azimuth_i`; in the central posture the coupler frame is a pure
//! translation of the base frame along `X_b`.
//!
//! The pose map `x = f(u)` has no closed form here, so it is solved by
//! Gauss-Newton on the three legs' FK/IK mismatch. Derivatives of `f` are
//! obtained by the implicit function theorem with residual partials evaluated
//! in forward-mode dual arithmetic, which keeps `J_IK` and the convective
//! term `J̇_IK·u̇` at machine precision.

mod closure;
mod leg;

use std::f64::consts::PI;

use nalgebra::{Matrix3x2, Matrix6x2, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WristError};
use crate::spatial::{DHRow, HomogeneousTransform, PoseVector};

pub use closure::{closure_residual, LoopClosure, Snapshot, CLOSURE_MAX_ITERATIONS};
pub use leg::{leg_fk, leg_fk_generic, leg_frames, leg_ik, leg_ik_generic, IK_ACOS_SLACK};

pub const NUM_LEGS: usize = 3;

/// Default link offset `d` (mm).
pub const DEFAULT_LINK_OFFSET: f64 = 49.0;
/// Default link twist `α` (rad).
pub const DEFAULT_LINK_TWIST: f64 = PI / 4.0;
/// Default placement offset `η` (rad).
pub const DEFAULT_ETA: f64 = PI / 4.0;
/// Default workspace bound on `|α_y|`, `|α_z|` (rad), i.e. 60°.
pub const DEFAULT_U_MAX: f64 = PI / 3.0;

/// Geometry of one leg: link offset, link twist and the leg's placement angle
/// about `X_b` (first DH row twist).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegGeometry {
    pub d: f64,
    pub alpha: f64,
    pub eta: f64,
}

impl LegGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(WristError::config("geometry.d", "must be finite and > 0"));
        }
        if !self.alpha.is_finite() || self.alpha.sin().abs() < 1e-9 {
            return Err(WristError::config("geometry.alpha", "sin(alpha) must be nonzero"));
        }
        if !self.eta.is_finite() {
            return Err(WristError::config("geometry.eta", "must be finite"));
        }
        Ok(())
    }

    /// The five DH rows: base→0, 0→1 (q1), 1→2 (q2), 2→3 (q3), 3→c (q4).
    pub fn dh_table(&self) -> [DHRow; 5] {
        [
            DHRow::new(0.0, 0.0, 0.0, self.eta),
            DHRow::new(0.0, 0.0, 0.0, PI / 2.0),
            DHRow::new(0.0, self.d, 0.0, -self.alpha),
            DHRow::new(0.0, -self.d, 0.0, PI / 2.0),
            DHRow::new(0.0, 0.0, 0.0, PI - self.eta),
        ]
    }
}

/// Geometry of the whole parallel mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanismGeometry {
    /// Link offset `d` (mm).
    pub d: f64,
    /// Link twist `α` (rad).
    pub alpha: f64,
    /// Placement offset `η` of the first leg about `X_b` (rad).
    pub eta: f64,
    /// Leg placement angles about `X_b`, added to `eta` (rad).
    pub azimuths: [f64; NUM_LEGS],
    /// Workspace bound on `|α_y|` and `|α_z|` (rad).
    pub u_max: f64,
}

impl Default for MechanismGeometry {
    fn default() -> Self {
        Self {
            d: DEFAULT_LINK_OFFSET,
            alpha: DEFAULT_LINK_TWIST,
            eta: DEFAULT_ETA,
            azimuths: [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0],
            u_max: DEFAULT_U_MAX,
        }
    }
}

impl MechanismGeometry {
    pub fn validate(&self) -> Result<()> {
        for leg in self.legs() {
            leg.validate()?;
        }
        if !(self.u_max.is_finite() && self.u_max > 0.0 && self.u_max < PI / 2.0) {
            return Err(WristError::config("geometry.u_max", "must lie in (0, π/2)"));
        }
        for (i, a) in self.azimuths.iter().enumerate() {
            let expected = 2.0 * PI * i as f64 / NUM_LEGS as f64;
            if (a - expected).abs() > 1e-9 {
                return Err(WristError::config(
                    format!("geometry.azimuths[{i}]"),
                    format!("legs must be evenly spaced: expected {expected:.12}, got {a}"),
                ));
            }
        }
        Ok(())
    }

    pub fn leg(&self, i: usize) -> LegGeometry {
        LegGeometry {
            d: self.d,
            alpha: self.alpha,
            eta: self.eta + self.azimuths[i],
        }
    }

    pub fn legs(&self) -> [LegGeometry; NUM_LEGS] {
        [self.leg(0), self.leg(1), self.leg(2)]
    }

    /// Distance of `O_c` from `O_b`; constant over the workspace for this
    /// mirror-symmetric mechanism.
    pub fn coupler_radius(&self) -> f64 {
        2.0 * self.d * (self.alpha / 2.0).sin()
    }

    /// Coupler pose at `u = (0, 0)`.
    pub fn central_pose(&self) -> PoseVector {
        PoseVector::new(0.0, 0.0, 0.0, self.coupler_radius(), 0.0, 0.0)
    }

    pub fn check_workspace(&self, u: &MinimalCoords) -> Result<()> {
        let inside = u.alpha_y.is_finite()
            && u.alpha_z.is_finite()
            && u.alpha_y.abs() <= self.u_max
            && u.alpha_z.abs() <= self.u_max;
        if inside {
            Ok(())
        } else {
            Err(WristError::OutsideWorkspace {
                alpha_y: u.alpha_y,
                alpha_z: u.alpha_z,
                u_max: self.u_max,
            })
        }
    }
}

/// Joint angles of one leg (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegJointAngles {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
}

impl LegJointAngles {
    pub fn new(q1: f64, q2: f64, q3: f64, q4: f64) -> Self {
        Self { q1, q2, q3, q4 }
    }

    pub fn from_array(q: [f64; 4]) -> Self {
        Self::new(q[0], q[1], q[2], q[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.q1, self.q2, self.q3, self.q4]
    }
}

/// `Q = [q_Aᵀ q_Bᵀ q_Cᵀ]ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackedJointAngles {
    pub legs: [LegJointAngles; NUM_LEGS],
}

impl StackedJointAngles {
    pub fn to_vector(&self) -> SVector<f64, 12> {
        SVector::from_iterator(self.legs.iter().flat_map(|l| l.to_array()))
    }

    pub fn from_vector(q: &SVector<f64, 12>) -> Self {
        let leg = |i: usize| LegJointAngles::new(q[4 * i], q[4 * i + 1], q[4 * i + 2], q[4 * i + 3]);
        Self {
            legs: [leg(0), leg(1), leg(2)],
        }
    }

    /// First joint angle of each leg.
    pub fn actuated(&self) -> Vector3<f64> {
        Vector3::new(self.legs[0].q1, self.legs[1].q1, self.legs[2].q1)
    }
}

/// Minimal posture coordinates `u = [α_y, α_z]` (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MinimalCoords {
    pub alpha_y: f64,
    pub alpha_z: f64,
}

impl MinimalCoords {
    pub const CENTER: MinimalCoords = MinimalCoords {
        alpha_y: 0.0,
        alpha_z: 0.0,
    };

    pub fn new(alpha_y: f64, alpha_z: f64) -> Self {
        Self { alpha_y, alpha_z }
    }

    pub fn from_vector(v: &nalgebra::Vector2<f64>) -> Self {
        Self::new(v[0], v[1])
    }

    pub fn to_vector(&self) -> nalgebra::Vector2<f64> {
        nalgebra::Vector2::new(self.alpha_y, self.alpha_z)
    }
}

/// `J_IK ∈ R^{12×2}` with `Q̇ = J_IK·u̇`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IKJacobian {
    pub matrix: SMatrix<f64, 12, 2>,
}

impl IKJacobian {
    /// Rows of the first joint of each leg (1-based rows 1, 5, 9).
    pub fn actuation(&self) -> Matrix3x2<f64> {
        let mut ja = Matrix3x2::zeros();
        for leg in 0..NUM_LEGS {
            ja.set_row(leg, &self.matrix.row(4 * leg));
        }
        ja
    }
}

/// Unit basis of `ker(J_aᵀ)`: the cross product of `J_a`'s columns, sign
/// fixed so the first non-negligible component is positive.
pub fn kernel_direction(ja: &Matrix3x2<f64>) -> Result<Vector3<f64>> {
    let c0: Vector3<f64> = ja.column(0).into_owned();
    let c1: Vector3<f64> = ja.column(1).into_owned();
    let n = c0.cross(&c1);
    let scale = c0.norm() * c1.norm();
    if !(scale > 0.0) || n.norm() <= 1e-8 * scale {
        return Err(WristError::Singularity(format!(
            "actuation Jacobian is rank deficient (|c0×c1| = {:.3e})",
            n.norm()
        )));
    }
    let mut n = n / n.norm();
    if let Some(first) = n.iter().copied().find(|v| v.abs() > 1e-12) {
        if first < 0.0 {
            n = -n;
        }
    }
    Ok(n)
}

/// Free-function view over [`LoopClosure`] for one-off evaluations.
pub fn coupler_pose_from_u(geometry: &MechanismGeometry, u: &MinimalCoords) -> Result<PoseVector> {
    LoopClosure::new(*geometry)?.coupler_pose(u, None)
}

pub fn ik_all_legs(geometry: &MechanismGeometry, u: &MinimalCoords) -> Result<StackedJointAngles> {
    Ok(LoopClosure::new(*geometry)?.snapshot(u, None)?.joints)
}

pub fn jacobian_ik(geometry: &MechanismGeometry, u: &MinimalCoords) -> Result<IKJacobian> {
    Ok(LoopClosure::new(*geometry)?.snapshot(u, None)?.j_ik)
}

pub fn actuation_jacobian(geometry: &MechanismGeometry, u: &MinimalCoords) -> Result<Matrix3x2<f64>> {
    LoopClosure::new(*geometry)?.snapshot(u, None)?.actuation_jacobian()
}

pub fn nullspace_base(geometry: &MechanismGeometry, u: &MinimalCoords) -> Result<Vector3<f64>> {
    LoopClosure::new(*geometry)?.snapshot(u, None)?.nullspace_base()
}

pub fn end_effector_pose(
    geometry: &MechanismGeometry,
    u: &MinimalCoords,
    theta_ps: f64,
) -> Result<HomogeneousTransform> {
    Ok(LoopClosure::new(*geometry)?
        .snapshot(u, None)?
        .end_effector_pose(theta_ps))
}

pub fn wrench_jacobian(
    geometry: &MechanismGeometry,
    u: &MinimalCoords,
    attachment_offset: &Vector3<f64>,
) -> Result<Matrix6x2<f64>> {
    Ok(LoopClosure::new(*geometry)?
        .snapshot(u, None)?
        .wrench_jacobian(attachment_offset))
}
