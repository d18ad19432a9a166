use std::f64::consts::PI;

use nalgebra::Vector3;

use super::{LegGeometry, LegJointAngles};
use crate::error::{Result, WristError};
use crate::spatial::{dh_transform, HomogeneousTransform};
use crate::{lit, Real};

/// Slack allowed on the `acos` argument before a pose is declared unreachable.
pub const IK_ACOS_SLACK: f64 = 1e-9;

/// Cumulative frames `{S_1}, {S_2}, {S_3}, {S_c}` of one leg in the base frame.
pub fn leg_frames<T: Real>(q: &[T; 4], geom: &LegGeometry) -> [HomogeneousTransform<T>; 4] {
    let rows = geom.dh_table();
    let base = dh_transform(&rows[0], T::zero());
    let f1 = base * dh_transform(&rows[1], q[0]);
    let f2 = f1 * dh_transform(&rows[2], q[1]);
    let f3 = f2 * dh_transform(&rows[3], q[2]);
    let fc = f3 * dh_transform(&rows[4], q[3]);
    [f1, f2, f3, fc]
}

pub fn leg_fk_generic<T: Real>(q: &[T; 4], geom: &LegGeometry) -> HomogeneousTransform<T> {
    leg_frames(q, geom)[3]
}

/// Coupler transform reached by one leg at joint angles `q`.
pub fn leg_fk(q: &LegJointAngles, geom: &LegGeometry) -> HomogeneousTransform {
    leg_fk_generic(&q.to_array(), geom)
}

/// Closed-form leg IK from the coupler position.
///
/// `q2 = acos((y sη − z cη) / (d sα))` selects the `sin q2 ≥ 0` branch;
/// `q1` is the full-quadrant `atan2` of the in-plane components, whose
/// numerator is `x(1 − cα) + (y cη + z sη) sα s2`. The remaining joints follow
/// the mirror symmetry `q3 = q2 + π`, `q4 = −q1`.
///
/// With `clamp` set the `acos` argument is saturated instead of rejected,
/// which keeps the loop-closure residual defined far from the solution.
pub fn leg_ik_generic<T: Real>(
    p: &Vector3<T>,
    geom: &LegGeometry,
    clamp: bool,
) -> Result<[T; 4]> {
    let (se, ce) = (lit::<T>(geom.eta.sin()), lit::<T>(geom.eta.cos()));
    let (sa, ca) = (geom.alpha.sin(), geom.alpha.cos());
    let d = geom.d;

    let in_plane = p.y * ce + p.z * se;
    let mut c2 = (p.y * se - p.z * ce) / lit::<T>(d * sa);
    let arg = c2.to_subset().unwrap_or(f64::NAN);
    if !arg.is_finite() || (!clamp && arg.abs() > 1.0 + IK_ACOS_SLACK) {
        return Err(WristError::UnreachablePose { argument: arg });
    }
    if arg > 1.0 {
        c2 = T::one();
    } else if arg < -1.0 {
        c2 = -T::one();
    }
    let q2 = c2.acos();
    let a = lit::<T>(1.0 - ca);
    let b = q2.sin() * lit::<T>(sa);
    let q1 = (p.x * a + in_plane * b).atan2(p.x * b - in_plane * a);
    Ok([q1, q2, q2 + lit::<T>(PI), -q1])
}

/// Joint angles of one leg for a target coupler transform.
///
/// Only the position of `O_c` enters; the orientation is implied by the
/// mechanism. `q3` is reported as exactly `q2 + π`.
pub fn leg_ik(t: &HomogeneousTransform, geom: &LegGeometry) -> Result<LegJointAngles> {
    let q = leg_ik_generic(&t.translation, geom, false)?;
    Ok(LegJointAngles::from_array(q))
}
