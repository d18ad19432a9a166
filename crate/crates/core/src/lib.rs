//! Simulation and control toolkit for a 3-DoF variable-stiffness parallel wrist.
//!
//! The wrist couples a two-DoF parallel mechanism (three legs of four revolute
//! joints each, driving a coupler over a hemisphere) with a serial
//! pronation/supination unit. Each leg's first joint is driven through a
//! nonlinear elastic transmission; because the mechanism is redundantly
//! actuated, internal torques along the kernel of the actuation Jacobian
//! change the spring deflections, and therefore the coupler stiffness,
//! without moving the coupler.
//!
//! Module map:
//!
//! * [`spatial`]: homogeneous transforms, Euler ZYX poses, DH link transforms.
//! * [`kinematics`]: leg FK/IK, the loop-closure pose map `x = f(u)`, and the
//!   Jacobians `J_IK`, `J_a`, `J_w` plus the kernel direction `N`.
//! * [`elasticity`]: spring law, coupler stiffness/compliance, internal torques.
//! * [`dynamics`]: reduced (projected) dynamics in `u`, motor lag, RK4 stepping
//!   and a constrained multiplier-based oracle over all twelve joints.
//! * [`control`]: posture references, the scalar compliance-matching flow and
//!   the proportional motor loop.
//! * [`harness`]: scenario configuration, runs, metrics, sweeps and CSV export.
//!
//! Units: radians, millimetres, seconds and kilograms. Torques are N·mm
//! internally and N·m only in exported logs.

pub mod control;
pub mod dynamics;
pub mod elasticity;
pub mod error;
pub mod harness;
pub mod kinematics;
pub mod spatial;

pub use error::{Result, WristError};

/// Scalar type accepted by the generic kinematics.
///
/// Implemented by `f64` and by the forward-mode dual numbers of `num_dual`,
/// which is how exact Jacobians and second derivatives are obtained.
pub trait Real: nalgebra::RealField + Copy {}

impl<T: nalgebra::RealField + Copy> Real for T {}

/// Lifts an `f64` constant into a generic scalar.
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}
