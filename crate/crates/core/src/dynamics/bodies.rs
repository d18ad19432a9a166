//! Rigid-body bookkeeping shared by the reduced model and the DAE oracle.

use nalgebra::{Matrix3, SMatrix, Vector3};
use num_dual::{Dual2_64, Dual64};

use super::{LinkInertia, MASS_SCALE};
use crate::spatial::{vee_skew, HomogeneousTransform};

/// Position, rotation and first-order rates of a body point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FirstOrder {
    pub v: Vector3<f64>,
    pub omega: Vector3<f64>,
}

/// Pose plus velocity and velocity-product ("bias") acceleration of a body
/// point along a second-order path.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SecondOrder {
    pub p: Vector3<f64>,
    pub r: Matrix3<f64>,
    pub omega: Vector3<f64>,
    pub a: Vector3<f64>,
    pub alpha: Vector3<f64>,
}

pub(crate) fn first_order(t: &HomogeneousTransform<Dual64>, point: &Vector3<f64>) -> FirstOrder {
    let p = t.transform_point(&point.map(Dual64::from_re));
    let r = t.rotation.map(|v| v.re);
    let rd = t.rotation.map(|v| v.eps);
    FirstOrder {
        v: p.map(|v| v.eps),
        omega: vee_skew(&(rd * r.transpose())),
    }
}

pub(crate) fn second_order(t: &HomogeneousTransform<Dual2_64>, point: &Vector3<f64>) -> SecondOrder {
    let p = t.transform_point(&point.map(Dual2_64::from_re));
    let r = t.rotation.map(|v| v.re);
    let rd = t.rotation.map(|v| v.v1);
    let rdd = t.rotation.map(|v| v.v2);
    SecondOrder {
        p: p.map(|v| v.re),
        r,
        omega: vee_skew(&(rd * r.transpose())),
        a: p.map(|v| v.v2),
        alpha: vee_skew(&(rdd * r.transpose() + rd * rd.transpose())),
    }
}

/// Accumulates `M`, the velocity-product term and the gravity term of a set of
/// bodies projected onto `N` coordinates (Kane's form of Newton-Euler).
#[derive(Debug, Clone)]
pub(crate) struct Projection<const N: usize> {
    pub mass: SMatrix<f64, N, N>,
    pub bias: SMatrix<f64, N, 1>,
    pub gravity: SMatrix<f64, N, 1>,
    pub potential: f64,
}

impl<const N: usize> Projection<N> {
    pub fn new() -> Self {
        Self {
            mass: SMatrix::zeros(),
            bias: SMatrix::zeros(),
            gravity: SMatrix::zeros(),
            potential: 0.0,
        }
    }

    /// Adds one body given its Jacobian columns and (optionally) its motion
    /// along the current velocity.
    pub fn add(
        &mut self,
        body: &LinkInertia,
        columns: &[FirstOrder; N],
        motion: &SecondOrder,
        gravity: &Vector3<f64>,
        with_bias: bool,
    ) {
        let jv = SMatrix::<f64, 3, N>::from_fn(|r, c| columns[c].v[r]);
        let jw = SMatrix::<f64, 3, N>::from_fn(|r, c| columns[c].omega[r]);
        let m = body.mass;
        let i_local = body.inertia_matrix();
        let iw = motion.r * i_local * motion.r.transpose();
        self.mass += (jv.transpose() * jv * m + jw.transpose() * iw * jw) * MASS_SCALE;
        if with_bias {
            let w = motion.omega;
            let torque = iw * motion.alpha + w.cross(&(iw * w));
            self.bias += (jv.transpose() * motion.a * m + jw.transpose() * torque) * MASS_SCALE;
        }
        self.gravity -= jv.transpose() * gravity * (m * MASS_SCALE);
        self.potential -= m * MASS_SCALE * gravity.dot(&motion.p);
    }
}
