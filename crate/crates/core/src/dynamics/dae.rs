//! Unprojected dynamics over all twelve joints with constraint multipliers.
//!
//! `B(Q) Q̈ + C(Q, Q̇) Q̇ + D Q̇ + G(Q) + Aᵀ(Q) y = J_wᵀ w_e + U_aᵀ τ_a`
//!
//! Every leg is integrated as an independent serial chain; the coupler and the
//! payload ride on leg A's end frame and the loop is closed by requiring legs
//! B and C to reach the same frame. `C Q̇` comes from Christoffel symbols of a
//! finite-differenced `B`. Constraint drift is held down with Baumgarte
//! stabilisation. This path shares only the leg chains and body data with
//! [`Plant`](super::Plant) and exists to cross-check it.

use nalgebra::{DMatrix, DVector, Matrix4, SMatrix, SVector, Vector2, Vector3, Vector4};
use num_dual::{Dual2_64, Dual64};

use super::bodies::{first_order, second_order, FirstOrder, Projection};
use super::{motor_step, DynParams, LinkInertia, PlantInputs, Wrench, NUM_JOINTS};
use crate::elasticity::{spring_torque, SpringParams};
use crate::error::{Result, WristError};
use crate::kinematics::{leg_frames, LegGeometry, MechanismGeometry, MinimalCoords, Snapshot, NUM_LEGS};
use crate::spatial::{transform_to_pose, vee_skew, HomogeneousTransform};

type Q = SVector<f64, NUM_JOINTS>;
const CONSTRAINTS: usize = 12;
const CHRISTOFFEL_STEP: f64 = 1e-6;
pub const DEFAULT_BAUMGARTE: f64 = 20.0;
/// Largest tolerated position-level constraint violation (scaled, dimensionless).
pub const DRIFT_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaeState {
    pub q: Q,
    pub q_dot: Q,
    pub theta: Vector3<f64>,
    pub t: f64,
}

/// Accelerations and multipliers of one evaluation.
#[derive(Debug, Clone)]
pub struct DaeSolution {
    pub q_ddot: Q,
    pub multipliers: SVector<f64, CONSTRAINTS>,
    /// `‖A Q̈ − b‖∞` for the stabilised constraint acceleration `b`.
    pub constraint_residual: f64,
}

#[derive(Debug, Clone)]
pub struct DaeOracle {
    legs: [LegGeometry; NUM_LEGS],
    params: DynParams,
    springs: [SpringParams; NUM_LEGS],
    /// Length scale dividing the position constraints.
    scale: f64,
    pub baumgarte: f64,
}

fn leg_q(q: &Q, leg: usize) -> [f64; 4] {
    [q[4 * leg], q[4 * leg + 1], q[4 * leg + 2], q[4 * leg + 3]]
}

impl DaeOracle {
    pub fn new(
        geometry: MechanismGeometry,
        params: DynParams,
        springs: [SpringParams; NUM_LEGS],
    ) -> Result<Self> {
        geometry.validate()?;
        params.validate()?;
        Ok(Self {
            legs: geometry.legs(),
            params,
            springs,
            scale: geometry.d,
            baumgarte: DEFAULT_BAUMGARTE,
        })
    }

    /// Consistent initial state from a reduced-model posture and velocity.
    pub fn initial_state(&self, snapshot: &Snapshot, u_dot: &Vector2<f64>, theta: &Vector3<f64>) -> DaeState {
        DaeState {
            q: snapshot.joints.to_vector(),
            q_dot: snapshot.j_ik.matrix * u_dot,
            theta: *theta,
            t: 0.0,
        }
    }

    fn bodies(&self, leg: usize) -> Vec<(usize, LinkInertia)> {
        let mut b: Vec<(usize, LinkInertia)> = self.params.links.iter().copied().enumerate().collect();
        if leg == 0 {
            b.extend(self.params.coupler_bodies().into_iter().map(|x| (3, x)));
        }
        b
    }

    fn leg_columns(&self, leg: usize, q: &[f64; 4]) -> [[HomogeneousTransform<Dual64>; 4]; 4] {
        std::array::from_fn(|k| {
            let qd: [Dual64; 4] = std::array::from_fn(|i| Dual64::new(q[i], if i == k { 1.0 } else { 0.0 }));
            leg_frames(&qd, &self.legs[leg])
        })
    }

    /// Mass matrix, gravity term and potential of one leg chain.
    fn leg_inertia(&self, leg: usize, q: &[f64; 4]) -> Projection<4> {
        let cols = self.leg_columns(leg, q);
        let rest = leg_frames(&q.map(Dual2_64::from_re), &self.legs[leg]);
        let g = self.params.gravity_vector();
        let mut proj = Projection::<4>::new();
        for (frame, body) in self.bodies(leg) {
            let com = body.com_vector();
            let c: [FirstOrder; 4] = std::array::from_fn(|k| first_order(&cols[k][frame], &com));
            proj.add(&body, &c, &second_order(&rest[frame], &com), &g, false);
        }
        proj
    }

    pub fn mass_matrix(&self, q: &Q) -> SMatrix<f64, NUM_JOINTS, NUM_JOINTS> {
        let mut b = SMatrix::<f64, NUM_JOINTS, NUM_JOINTS>::zeros();
        for leg in 0..NUM_LEGS {
            let m = self.leg_inertia(leg, &leg_q(q, leg)).mass;
            b.fixed_view_mut::<4, 4>(4 * leg, 4 * leg).copy_from(&m);
        }
        b
    }

    /// `C(Q, Q̇) Q̇ = Ḃ Q̇ − ½ ∂(Q̇ᵀ B Q̇)/∂Q`, per leg by central differences.
    fn coriolis(&self, q: &Q, q_dot: &Q) -> Q {
        let h = CHRISTOFFEL_STEP;
        let mut out = Q::zeros();
        for leg in 0..NUM_LEGS {
            let q0 = Vector4::from(leg_q(q, leg));
            let v = Vector4::from(leg_q(q_dot, leg));
            let b = |x: Vector4<f64>| -> Matrix4<f64> { self.leg_inertia(leg, &x.into()).mass };
            let b_dot = (b(q0 + v * h) - b(q0 - v * h)) / (2.0 * h);
            let mut grad = Vector4::zeros();
            for k in 0..4 {
                let e = Vector4::ith(k, h);
                let (bp, bm) = (b(q0 + e), b(q0 - e));
                grad[k] = v.dot(&((bp - bm) * v)) / (2.0 * h);
            }
            out.fixed_rows_mut::<4>(4 * leg).copy_from(&(b_dot * v - grad * 0.5));
        }
        out
    }

    /// End frames of every leg with their joint-space velocity Jacobians
    /// (rows: linear scaled by `1/scale`, then angular).
    fn constraint_blocks(&self, q: &Q) -> [SMatrix<f64, 6, 4>; NUM_LEGS] {
        std::array::from_fn(|leg| {
            let cols = self.leg_columns(leg, &leg_q(q, leg));
            SMatrix::<f64, 6, 4>::from_fn(|r, k| {
                let f = first_order(&cols[k][3], &Vector3::zeros());
                if r < 3 { f.v[r] / self.scale } else { f.omega[r - 3] }
            })
        })
    }

    /// `A(Q)`: rows 0-5 `V_A Q̇_A − V_B Q̇_B`, rows 6-11 `V_A Q̇_A − V_C Q̇_C`.
    pub fn constraint_jacobian(&self, q: &Q) -> SMatrix<f64, CONSTRAINTS, NUM_JOINTS> {
        let v = self.constraint_blocks(q);
        let mut a = SMatrix::<f64, CONSTRAINTS, NUM_JOINTS>::zeros();
        for (k, other) in [1usize, 2].into_iter().enumerate() {
            a.fixed_view_mut::<6, 4>(6 * k, 0).copy_from(&v[0]);
            a.fixed_view_mut::<6, 4>(6 * k, 4 * other).copy_from(&(-v[other]));
        }
        a
    }

    fn end_motion(&self, leg: usize, q: &Q, q_dot: &Q) -> (Vector3<f64>, nalgebra::Matrix3<f64>, Vector3<f64>, Vector3<f64>) {
        let qq = leg_q(q, leg);
        let vv = leg_q(q_dot, leg);
        let qd: [Dual2_64; 4] = std::array::from_fn(|i| Dual2_64::new(qq[i], vv[i], 0.0));
        let m = second_order(&leg_frames(&qd, &self.legs[leg])[3], &Vector3::zeros());
        (m.p, m.r, m.a, m.alpha)
    }

    /// Position-level violation `Φ(Q)` (same scaling as `A`).
    pub fn constraint_error(&self, q: &Q) -> SVector<f64, CONSTRAINTS> {
        let zero = Q::zeros();
        let (pa, ra, _, _) = self.end_motion(0, q, &zero);
        let mut phi = SVector::<f64, CONSTRAINTS>::zeros();
        for (k, other) in [1usize, 2].into_iter().enumerate() {
            let (p, r, _, _) = self.end_motion(other, q, &zero);
            phi.fixed_rows_mut::<3>(6 * k).copy_from(&((pa - p) / self.scale));
            phi.fixed_rows_mut::<3>(6 * k + 3).copy_from(&vee_skew(&(ra * r.transpose())));
        }
        phi
    }

    /// `Ȧ Q̇`.
    fn constraint_bias(&self, q: &Q, q_dot: &Q) -> SVector<f64, CONSTRAINTS> {
        let (_, _, aa, wa) = self.end_motion(0, q, q_dot);
        let mut out = SVector::<f64, CONSTRAINTS>::zeros();
        for (k, other) in [1usize, 2].into_iter().enumerate() {
            let (_, _, a, w) = self.end_motion(other, q, q_dot);
            out.fixed_rows_mut::<3>(6 * k).copy_from(&((aa - a) / self.scale));
            out.fixed_rows_mut::<3>(6 * k + 3).copy_from(&(wa - w));
        }
        out
    }

    /// Generalized forces other than inertia and constraints:
    /// `U_aᵀ τ_a + J_wᵀ w_e − D Q̇ − G`.
    fn applied(&self, state: &DaeState, wrench: &Wrench) -> Result<(Q, SMatrix<f64, NUM_JOINTS, NUM_JOINTS>)> {
        let mut f = Q::zeros();
        let mut b = SMatrix::<f64, NUM_JOINTS, NUM_JOINTS>::zeros();
        for leg in 0..NUM_LEGS {
            let q = leg_q(&state.q, leg);
            let proj = self.leg_inertia(leg, &q);
            b.fixed_view_mut::<4, 4>(4 * leg, 4 * leg).copy_from(&proj.mass);
            f.fixed_rows_mut::<4>(4 * leg).copy_from(&(-proj.gravity));
            f[4 * leg] += spring_torque(q[0] - state.theta[leg], &self.springs[leg])?;
        }
        let cols = self.leg_columns(0, &leg_q(&state.q, 0));
        let point = self.params.payload_point();
        for k in 0..4 {
            let c = first_order(&cols[k][3], &point);
            f[k] += c.v.dot(&wrench.fixed_rows::<3>(0)) + c.omega.dot(&wrench.fixed_rows::<3>(3));
        }
        let damping = Q::from(self.params.damping);
        f -= state.q_dot.component_mul(&damping);
        f -= self.coriolis(&state.q, &state.q_dot);
        Ok((f, b))
    }

    /// Solves `[B Aᵀ; A 0][Q̈; y] = [F; b]` in the least-squares sense (the
    /// loop constraints are redundant, so `y` is the minimum-norm choice).
    pub fn solve(&self, state: &DaeState, wrench: &Wrench) -> Result<DaeSolution> {
        let (f, b) = self.applied(state, wrench)?;
        let a = self.constraint_jacobian(&state.q);
        let beta = self.baumgarte;
        let rhs_c = -self.constraint_bias(&state.q, &state.q_dot)
            - a * state.q_dot * (2.0 * beta)
            - self.constraint_error(&state.q) * (beta * beta);

        let n = NUM_JOINTS + CONSTRAINTS;
        let mut kkt = DMatrix::<f64>::zeros(n, n);
        kkt.view_mut((0, 0), (NUM_JOINTS, NUM_JOINTS)).copy_from(&b);
        kkt.view_mut((0, NUM_JOINTS), (NUM_JOINTS, CONSTRAINTS)).copy_from(&a.transpose());
        kkt.view_mut((NUM_JOINTS, 0), (CONSTRAINTS, NUM_JOINTS)).copy_from(&a);
        let mut rhs = DVector::<f64>::zeros(n);
        rhs.rows_mut(0, NUM_JOINTS).copy_from(&f);
        rhs.rows_mut(NUM_JOINTS, CONSTRAINTS).copy_from(&rhs_c);

        let svd = kkt.svd(true, true);
        let tol = svd.singular_values.max() * 1e-11;
        let x = svd
            .solve(&rhs, tol)
            .map_err(|e| WristError::OracleFailure(format!("KKT solve failed: {e}")))?;
        let q_ddot = Q::from_iterator(x.rows(0, NUM_JOINTS).iter().copied());
        let multipliers = SVector::<f64, CONSTRAINTS>::from_iterator(x.rows(NUM_JOINTS, CONSTRAINTS).iter().copied());
        let constraint_residual = (a * q_ddot - rhs_c).amax();
        Ok(DaeSolution {
            q_ddot,
            multipliers,
            constraint_residual,
        })
    }

    /// One RK4 step of `(Q, Q̇)`, motors held then lag-updated as in the
    /// reduced plant.
    pub fn step(&self, state: &DaeState, inputs: &PlantInputs, dt: f64) -> Result<DaeState> {
        let f = |q: Q, v: Q| -> Result<Q> {
            let s = DaeState { q, q_dot: v, ..*state };
            Ok(self.solve(&s, &inputs.wrench)?.q_ddot)
        };
        let (q0, v0) = (state.q, state.q_dot);
        let a1 = f(q0, v0)?;
        let (q2, v2) = (q0 + v0 * (dt / 2.0), v0 + a1 * (dt / 2.0));
        let a2 = f(q2, v2)?;
        let (q3, v3) = (q0 + v2 * (dt / 2.0), v0 + a2 * (dt / 2.0));
        let a3 = f(q3, v3)?;
        let (q4, v4) = (q0 + v3 * dt, v0 + a3 * dt);
        let a4 = f(q4, v4)?;
        let q = q0 + (v0 + v2 * 2.0 + v3 * 2.0 + v4) * (dt / 6.0);
        let q_dot = v0 + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
        let drift = self.constraint_error(&q).amax();
        if !(drift <= DRIFT_LIMIT) {
            return Err(WristError::OracleFailure(format!(
                "constraint drift {drift:.3e} at t = {:.4} s",
                state.t + dt
            )));
        }
        Ok(DaeState {
            q,
            q_dot,
            theta: motor_step(&state.theta, &inputs.motor_command, dt, self.params.motor_tau),
            t: state.t + dt,
        })
    }

    /// Posture read from leg A's end frame.
    pub fn coupler_u(&self, q: &Q) -> Result<MinimalCoords> {
        let f = leg_frames(&leg_q(q, 0), &self.legs[0])[3];
        let pose = transform_to_pose(&f)?;
        Ok(MinimalCoords::new(pose.alpha_y, pose.alpha_z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::LoopClosure;

    fn oracle() -> (DaeOracle, LoopClosure) {
        let g = MechanismGeometry::default();
        (
            DaeOracle::new(g, DynParams::default(), [SpringParams::default(); 3]).unwrap(),
            LoopClosure::new(g).unwrap(),
        )
    }

    #[test]
    fn constraint_jacobian_has_rank_ten() {
        let (o, lc) = oracle();
        for &(a, b) in &[(0.0, 0.0), (0.4, -0.3), (-0.9, 0.8)] {
            let s = lc.snapshot(&MinimalCoords::new(a, b), None).unwrap();
            let q = s.joints.to_vector();
            assert!(o.constraint_error(&q).amax() < 1e-12);
            let a_mat = o.constraint_jacobian(&q);
            assert_eq!(a_mat.rank(1e-9 * a_mat.amax()), 10);
            // Q̇ = J_IK u̇ is admissible.
            assert!((a_mat * s.j_ik.matrix).amax() < 1e-9);
        }
    }

    #[test]
    fn multipliers_enforce_constraint_acceleration() {
        let (o, lc) = oracle();
        let s = lc.snapshot(&MinimalCoords::new(0.3, 0.2), None).unwrap();
        let st = o.initial_state(&s, &Vector2::new(1.0, -0.5), &s.joints.actuated());
        let sol = o.solve(&st, &Wrench::zeros()).unwrap();
        assert!(sol.constraint_residual < 1e-10, "{}", sol.constraint_residual);
    }

    #[test]
    fn christoffel_route_matches_dual_bias() {
        // C Q̇ from finite-differenced B equals the Newton-Euler bias of the chain.
        let (o, lc) = oracle();
        let s = lc.snapshot(&MinimalCoords::new(-0.2, 0.5), None).unwrap();
        let q = s.joints.to_vector();
        let v = Q::from_fn(|i, _| 0.3 + 0.1 * i as f64);
        let c = o.coriolis(&q, &v);
        for leg in 0..3 {
            let qq = leg_q(&q, leg);
            let vv = leg_q(&v, leg);
            let cols = o.leg_columns(leg, &qq);
            let qd: [Dual2_64; 4] = std::array::from_fn(|i| Dual2_64::new(qq[i], vv[i], 0.0));
            let path = leg_frames(&qd, &o.legs[leg]);
            let mut proj = Projection::<4>::new();
            for (frame, body) in o.bodies(leg) {
                let com = body.com_vector();
                let cc: [FirstOrder; 4] = std::array::from_fn(|k| first_order(&cols[k][frame], &com));
                proj.add(&body, &cc, &second_order(&path[frame], &com), &Vector3::zeros(), true);
            }
            let expected = proj.bias;
            let got = c.fixed_rows::<4>(4 * leg);
            assert!((got - expected).amax() < 1e-7 * (1.0 + expected.amax()), "{got} vs {expected}");
        }
    }
}
