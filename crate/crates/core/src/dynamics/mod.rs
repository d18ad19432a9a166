//! Reduced rigid-body dynamics of the wrist in the minimal coordinates `u`.
//!
//! The mechanism's kinetic and potential energy is the sum over nine leg
//! links, the coupler and the hand payload, all of whose poses are functions
//! of `u` through the loop closure. Projecting every body's Newton-Euler
//! equations onto `u` gives
//!
//! `M_u(u) ü + h_u(u, u̇) + g_u(u) = J_aᵀ τ_a + J_wᵀ w_e`,
//!
//! with `M_u = J_IKᵀ B J_IK` plus the coupler terms and the joint damping
//! `J_IKᵀ D J_IK u̇` folded into `h_u`. An unprojected formulation over all
//! twelve joints with explicit constraint multipliers lives in [`dae`] and is
//! used as a cross-check.
//!
//! Units: lengths in mm, masses in kg, torques in N·mm, forces in N. Inertial
//! and gravity terms are computed in kg·mm and rescaled by [`MASS_SCALE`].

mod bodies;
pub mod dae;

use nalgebra::{Matrix2, Matrix3, SVector, Vector2, Vector3, Vector6};
use num_dual::Dual64;
use serde::{Deserialize, Serialize};

use crate::elasticity::{spring_potential, spring_torque, SpringParams};
use crate::error::{Result, WristError};
use crate::kinematics::{
    leg_frames, LoopClosure, MechanismGeometry, MinimalCoords, Snapshot, NUM_LEGS,
};
use crate::spatial::{pose_to_transform, HomogeneousTransform, PoseVector};
use crate::Real;

use bodies::{first_order, second_order, FirstOrder, Projection};

/// kg·mm²/s² → N·mm.
pub const MASS_SCALE: f64 = 1e-3;
pub const NUM_JOINTS: usize = 4 * NUM_LEGS;
pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_MOTOR_TAU: f64 = 0.02;
pub const DEFAULT_DAMPING: f64 = 0.5;
/// Standard gravity in mm/s².
pub const STANDARD_GRAVITY: f64 = 9806.65;

/// `[force (N); moment (N·mm)]` in base coordinates, applied at the payload point.
pub type Wrench = Vector6<f64>;

/// Mass properties of one rigid body, expressed in the body's frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkInertia {
    /// kg
    pub mass: f64,
    /// Centre of mass (mm).
    pub com: [f64; 3],
    /// Inertia tensor about the centre of mass (kg·mm²).
    pub inertia: [[f64; 3]; 3],
}

impl LinkInertia {
    pub fn point_mass(mass: f64, com: [f64; 3]) -> Self {
        Self {
            mass,
            com,
            inertia: [[0.0; 3]; 3],
        }
    }

    /// Uniform thin rod of length `length` along the local `axis` (0, 1 or 2).
    pub fn rod(mass: f64, length: f64, axis: usize, com: [f64; 3]) -> Self {
        let transverse = mass * length * length / 12.0;
        let mut inertia = [[0.0; 3]; 3];
        for (k, row) in inertia.iter_mut().enumerate() {
            row[k] = if k == axis { 0.05 * transverse } else { transverse };
        }
        Self { mass, com, inertia }
    }

    pub fn com_vector(&self) -> Vector3<f64> {
        Vector3::from(self.com)
    }

    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.inertia[r][c])
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.mass.is_finite() && self.mass >= 0.0) {
            return Err(WristError::config(format!("{field}.mass"), "must be finite and >= 0"));
        }
        if !self.com.iter().all(|v| v.is_finite()) {
            return Err(WristError::config(format!("{field}.com"), "must be finite"));
        }
        let i = self.inertia_matrix();
        if !i.iter().all(|v| v.is_finite()) {
            return Err(WristError::config(format!("{field}.inertia"), "must be finite"));
        }
        let scale = i.amax().max(1e-12);
        if (i - i.transpose()).amax() > 1e-9 * scale {
            return Err(WristError::config(format!("{field}.inertia"), "must be symmetric"));
        }
        let eig = i.symmetric_eigen().eigenvalues;
        if eig.iter().any(|&e| e < -1e-9 * scale) {
            return Err(WristError::config(format!("{field}.inertia"), "must be positive semi-definite"));
        }
        let (a, b, c) = (eig[0], eig[1], eig[2]);
        let tol = 1e-9 * scale;
        if a + b < c - tol || a + c < b - tol || b + c < a - tol {
            return Err(WristError::config(
                format!("{field}.inertia"),
                "principal moments violate the triangle inequality",
            ));
        }
        Ok(())
    }
}

/// Dynamic parameters of the plant.
///
/// The default link and coupler inertias are estimates (thin rods and a disc)
/// sized so the moving mechanism weighs about half a kilogram; the payload is
/// a 300 g point mass 100 mm along the coupler's `X` axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynParams {
    /// Links 1-3 of each leg, attached to the frames after `q1`, `q2`, `q3`.
    pub links: [LinkInertia; 3],
    /// Coupler body, attached to the coupler frame.
    pub coupler: LinkInertia,
    /// kg
    pub payload_mass: f64,
    /// Payload point in the coupler frame (mm).
    pub payload_offset: [f64; 3],
    /// Viscous damping of the twelve joints, leg-major (N·mm·s/rad).
    pub damping: [f64; NUM_JOINTS],
    /// Gravity acceleration in base coordinates (mm/s²).
    pub gravity: [f64; 3],
    /// Motor low-pass time constant (s).
    pub motor_tau: f64,
    /// Pronation-supination motor time constant (s).
    pub ps_tau: f64,
    /// Integration step (s).
    pub dt: f64,
}

impl Default for DynParams {
    fn default() -> Self {
        let d = crate::kinematics::DEFAULT_LINK_OFFSET;
        Self {
            links: [
                LinkInertia::rod(0.045, d, 2, [0.0, 0.0, d / 2.0]),
                LinkInertia::rod(0.045, d, 2, [0.0, 0.0, -d / 2.0]),
                LinkInertia::rod(0.045, d, 2, [0.0, 0.0, 0.0]),
            ],
            coupler: LinkInertia {
                mass: 0.15,
                com: [0.0; 3],
                inertia: [[67.5, 0.0, 0.0], [0.0, 33.75, 0.0], [0.0, 0.0, 33.75]],
            },
            payload_mass: 0.3,
            payload_offset: [100.0, 0.0, 0.0],
            damping: [DEFAULT_DAMPING; NUM_JOINTS],
            gravity: [STANDARD_GRAVITY, 0.0, 0.0],
            motor_tau: DEFAULT_MOTOR_TAU,
            ps_tau: DEFAULT_MOTOR_TAU,
            dt: DEFAULT_DT,
        }
    }
}

impl DynParams {
    pub fn validate(&self) -> Result<()> {
        for (i, l) in self.links.iter().enumerate() {
            l.validate(&format!("dynamics.links[{i}]"))?;
        }
        self.coupler.validate("dynamics.coupler")?;
        if !(self.payload_mass.is_finite() && self.payload_mass >= 0.0) {
            return Err(WristError::config("dynamics.payload_mass", "must be finite and >= 0"));
        }
        if !self.payload_offset.iter().all(|v| v.is_finite()) {
            return Err(WristError::config("dynamics.payload_offset", "must be finite"));
        }
        for (i, d) in self.damping.iter().enumerate() {
            if !(d.is_finite() && *d >= 0.0) {
                return Err(WristError::config(format!("dynamics.damping[{i}]"), "must be finite and >= 0"));
            }
        }
        if !self.gravity.iter().all(|v| v.is_finite()) {
            return Err(WristError::config("dynamics.gravity", "must be finite"));
        }
        for (name, v) in [("motor_tau", self.motor_tau), ("ps_tau", self.ps_tau), ("dt", self.dt)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(WristError::config(format!("dynamics.{name}"), "must be finite and > 0"));
            }
        }
        if self.dt > 1e-3 {
            return Err(WristError::config("dynamics.dt", "must not exceed 1e-3 s"));
        }
        Ok(())
    }

    pub fn gravity_vector(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }

    pub fn payload_point(&self) -> Vector3<f64> {
        Vector3::from(self.payload_offset)
    }

    fn payload(&self) -> LinkInertia {
        LinkInertia::point_mass(self.payload_mass, self.payload_offset)
    }

    /// Bodies riding on the coupler frame.
    pub(crate) fn coupler_bodies(&self) -> [LinkInertia; 2] {
        [self.coupler, self.payload()]
    }

    /// Wrench of a gravitational load of `mass` kg at the payload point.
    pub fn load_wrench(&self, mass: f64) -> Wrench {
        let f = self.gravity_vector() * (mass * MASS_SCALE);
        Wrench::new(f.x, f.y, f.z, 0.0, 0.0, 0.0)
    }
}

/// Full simulation state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub u: MinimalCoords,
    /// rad/s
    pub u_dot: [f64; 2],
    /// Motor angles (rad).
    pub theta: [f64; NUM_LEGS],
    pub theta_ps: f64,
    /// Preload reference carried by the controller (N·mm).
    pub lambda_r: f64,
    pub t: f64,
}

impl SimState {
    pub fn at_rest(u: MinimalCoords, theta: Vector3<f64>) -> Self {
        Self {
            u,
            u_dot: [0.0; 2],
            theta: theta.into(),
            theta_ps: 0.0,
            lambda_r: 0.0,
            t: 0.0,
        }
    }

    pub fn u_dot_vector(&self) -> Vector2<f64> {
        Vector2::from(self.u_dot)
    }

    pub fn theta_vector(&self) -> Vector3<f64> {
        Vector3::from(self.theta)
    }

    pub fn is_finite(&self) -> bool {
        self.u.alpha_y.is_finite()
            && self.u.alpha_z.is_finite()
            && self.u_dot.iter().all(|v| v.is_finite())
            && self.theta.iter().all(|v| v.is_finite())
            && self.theta_ps.is_finite()
            && self.lambda_r.is_finite()
            && self.t.is_finite()
    }
}

/// Inputs held constant over one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantInputs {
    pub motor_command: Vector3<f64>,
    pub ps_command: f64,
    pub wrench: Wrench,
}

impl PlantInputs {
    /// Motors held where they are, no external wrench.
    pub fn hold(state: &SimState) -> Self {
        Self {
            motor_command: state.theta_vector(),
            ps_command: state.theta_ps,
            wrench: Wrench::zeros(),
        }
    }
}

/// Terms of the reduced equation of motion at one state.
#[derive(Debug, Clone)]
pub struct ReducedTerms {
    pub m_u: Matrix2<f64>,
    pub h_u: Vector2<f64>,
    pub g_u: Vector2<f64>,
    /// Gravitational potential of all bodies (N·mm).
    pub potential: f64,
    pub snapshot: Snapshot,
}

/// Energy split of one state (N·mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub kinetic: f64,
    pub gravity: f64,
    pub spring: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.gravity + self.spring
    }
}

/// Frames of all moving bodies for one pose, in any scalar type: per leg the
/// three link frames, and the coupler frame.
fn mechanism_frames<T: Real>(
    pose: &PoseVector<T>,
    closure: &LoopClosure,
    snapshot: &Snapshot,
) -> Result<([[HomogeneousTransform<T>; 3]; NUM_LEGS], HomogeneousTransform<T>)> {
    let q = snapshot.joints_along(pose)?;
    let legs = closure.legs();
    let frames = std::array::from_fn(|i| {
        let f = leg_frames(&q[i], &legs[i]);
        [f[0], f[1], f[2]]
    });
    Ok((frames, pose_to_transform(pose)))
}

/// `τ_a,i = τ_s(q1,i − θ_i)`: the spring pulls each first joint toward its motor.
pub fn elastic_actuation(
    q1: &Vector3<f64>,
    theta: &Vector3<f64>,
    springs: &[SpringParams; NUM_LEGS],
) -> Result<Vector3<f64>> {
    let mut tau = Vector3::zeros();
    for i in 0..NUM_LEGS {
        tau[i] = spring_torque(q1[i] - theta[i], &springs[i])?;
    }
    Ok(tau)
}

/// Exact update of the first-order lag `τ θ̇ = command − θ` over `dt`.
pub fn motor_step(theta: &Vector3<f64>, command: &Vector3<f64>, dt: f64, tau: f64) -> Vector3<f64> {
    let decay = (-dt / tau).exp();
    command + (theta - command) * decay
}

fn scalar_lag(x: f64, command: f64, dt: f64, tau: f64) -> f64 {
    command + (x - command) * (-dt / tau).exp()
}

/// Generalized force on `u`: `J_aᵀ τ_a + J_wᵀ w_e`, with `w_e` applied at `offset`
/// in the coupler frame.
pub fn applied_forces(
    snapshot: &Snapshot,
    tau_a: &Vector3<f64>,
    wrench: &Wrench,
    offset: &Vector3<f64>,
) -> Result<Vector2<f64>> {
    let ja = snapshot.actuation_jacobian()?;
    let jw = snapshot.wrench_jacobian(offset);
    Ok(ja.transpose() * tau_a + jw.transpose() * wrench)
}

/// The wrist as an integrable plant.
///
/// Keeps the last loop-closure solution as the seed for the next one, so a
/// plant instance should follow a single trajectory.
#[derive(Debug, Clone)]
pub struct Plant {
    closure: LoopClosure,
    params: DynParams,
    springs: [SpringParams; NUM_LEGS],
    seed: Option<PoseVector>,
}

impl Plant {
    pub fn new(
        geometry: MechanismGeometry,
        params: DynParams,
        springs: [SpringParams; NUM_LEGS],
    ) -> Result<Self> {
        params.validate()?;
        for (i, s) in springs.iter().enumerate() {
            s.validate(&format!("springs[{i}]"))?;
        }
        Ok(Self {
            closure: LoopClosure::new(geometry)?,
            params,
            springs,
            seed: None,
        })
    }

    pub fn params(&self) -> &DynParams {
        &self.params
    }

    pub fn springs(&self) -> &[SpringParams; NUM_LEGS] {
        &self.springs
    }

    pub fn closure(&self) -> &LoopClosure {
        &self.closure
    }

    pub fn geometry(&self) -> &MechanismGeometry {
        self.closure.geometry()
    }

    pub fn snapshot(&mut self, u: &MinimalCoords) -> Result<Snapshot> {
        let s = self.closure.snapshot(u, self.seed.as_ref())?;
        self.seed = Some(s.pose);
        Ok(s)
    }

    /// `M_u`, `h_u` (velocity products and damping) and `g_u` at `(u, u̇)`.
    pub fn reduced_terms(&mut self, u: &MinimalCoords, u_dot: &Vector2<f64>) -> Result<ReducedTerms> {
        let snapshot = self.snapshot(u)?;
        let mut proj = Projection::<2>::new();
        let g = self.params.gravity_vector();

        let mut columns = Vec::with_capacity(2);
        for j in 0..2 {
            let du = if j == 0 { Vector2::x() } else { Vector2::y() };
            columns.push(mechanism_frames::<Dual64>(&snapshot.pose_dual(&du), &self.closure, &snapshot)?);
        }
        let path = mechanism_frames(&snapshot.pose_path(u_dot)?, &self.closure, &snapshot)?;

        let col = |frame: &dyn Fn(usize) -> FirstOrder| -> [FirstOrder; 2] { [frame(0), frame(1)] };
        for leg in 0..NUM_LEGS {
            for (k, body) in self.params.links.iter().enumerate() {
                let com = body.com_vector();
                let cols = col(&|j| first_order(&columns[j].0[leg][k], &com));
                let motion = second_order(&path.0[leg][k], &com);
                proj.add(body, &cols, &motion, &g, true);
            }
        }
        for body in self.params.coupler_bodies() {
            let com = body.com_vector();
            let cols = col(&|j| first_order(&columns[j].1, &com));
            let motion = second_order(&path.1, &com);
            proj.add(&body, &cols, &motion, &g, true);
        }

        let j_ik = snapshot.j_ik.matrix;
        let damping = SVector::<f64, NUM_JOINTS>::from(self.params.damping);
        let q_dot = j_ik * u_dot;
        let h_u = proj.bias + j_ik.transpose() * q_dot.component_mul(&damping);

        let m_u = proj.mass;
        let asym = (m_u - m_u.transpose()).amax();
        let m_u = (m_u + m_u.transpose()) * 0.5;
        if asym > 1e-9 * m_u.amax() || m_u.cholesky().is_none() {
            return Err(WristError::ModelInconsistency(format!(
                "reduced mass matrix is not symmetric positive definite: {m_u:?}"
            )));
        }
        Ok(ReducedTerms {
            m_u,
            h_u,
            g_u: proj.gravity,
            potential: proj.potential,
            snapshot,
        })
    }

    /// Spring torques at the posture of `snapshot`.
    pub fn elastic_torques(&self, snapshot: &Snapshot, theta: &Vector3<f64>) -> Result<Vector3<f64>> {
        elastic_actuation(&snapshot.joints.actuated(), theta, &self.springs)
    }

    /// `ü` for motor angles `theta` and an external wrench at the payload point.
    pub fn acceleration(
        &mut self,
        u: &MinimalCoords,
        u_dot: &Vector2<f64>,
        theta: &Vector3<f64>,
        wrench: &Wrench,
    ) -> Result<Vector2<f64>> {
        let terms = self.reduced_terms(u, u_dot)?;
        let tau = self.elastic_torques(&terms.snapshot, theta)?;
        let f = applied_forces(&terms.snapshot, &tau, wrench, &self.params.payload_point())?;
        let rhs = f - terms.h_u - terms.g_u;
        terms
            .m_u
            .cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| WristError::ModelInconsistency("reduced mass matrix lost definiteness".into()))
    }

    /// One RK4 step of `(u, u̇)` with the motors held over the step, then the
    /// exact motor lag update.
    pub fn step(&mut self, state: &SimState, inputs: &PlantInputs, dt: f64) -> Result<SimState> {
        if !(dt > 0.0 && dt <= self.params.dt * (1.0 + 1e-12)) {
            return Err(WristError::InvalidArgument(format!(
                "step size {dt} outside (0, {}]",
                self.params.dt
            )));
        }
        let halt = |e: WristError| match e {
            WristError::OutsideWorkspace { .. }
            | WristError::SpringSaturation { .. }
            | WristError::LoopClosureFailure { .. }
            | WristError::Singularity(_)
            | WristError::UnreachablePose { .. }
            | WristError::ModelInconsistency(_) => WristError::SimulationHalt {
                time: state.t,
                reason: e.to_string(),
            },
            other => other,
        };
        let theta = state.theta_vector();
        let w = inputs.wrench;
        let u0 = state.u.to_vector();
        let v0 = state.u_dot_vector();
        let mut f = |u: Vector2<f64>, v: Vector2<f64>| -> Result<Vector2<f64>> {
            self.acceleration(&MinimalCoords::from_vector(&u), &v, &theta, &w)
                .map_err(halt)
        };
        let a1 = f(u0, v0)?;
        let (u2, v2) = (u0 + v0 * (dt / 2.0), v0 + a1 * (dt / 2.0));
        let a2 = f(u2, v2)?;
        let (u3, v3) = (u0 + v2 * (dt / 2.0), v0 + a2 * (dt / 2.0));
        let a3 = f(u3, v3)?;
        let (u4, v4) = (u0 + v3 * dt, v0 + a3 * dt);
        let a4 = f(u4, v4)?;
        let u = u0 + (v0 + v2 * 2.0 + v3 * 2.0 + v4) * (dt / 6.0);
        let v = v0 + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);

        let u = MinimalCoords::from_vector(&u);
        self.geometry().check_workspace(&u).map_err(halt)?;
        let next = SimState {
            u,
            u_dot: v.into(),
            theta: motor_step(&theta, &inputs.motor_command, dt, self.params.motor_tau).into(),
            theta_ps: scalar_lag(state.theta_ps, inputs.ps_command, dt, self.params.ps_tau),
            lambda_r: state.lambda_r,
            t: state.t + dt,
        };
        if !next.is_finite() {
            return Err(WristError::SimulationHalt {
                time: state.t,
                reason: "non-finite state".into(),
            });
        }
        Ok(next)
    }

    /// Kinetic, gravitational and elastic energy of a state.
    pub fn energy(&mut self, state: &SimState) -> Result<Energy> {
        let v = state.u_dot_vector();
        let terms = self.reduced_terms(&state.u, &v)?;
        let q1 = terms.snapshot.joints.actuated();
        let spring = (0..NUM_LEGS)
            .map(|i| spring_potential(q1[i] - state.theta[i], &self.springs[i]))
            .sum();
        Ok(Energy {
            kinetic: 0.5 * v.dot(&(terms.m_u * v)),
            gravity: terms.potential,
            spring,
        })
    }

    /// Gravitational potential of all bodies at `u` (N·mm).
    pub fn gravity_potential(&mut self, u: &MinimalCoords) -> Result<f64> {
        Ok(self.reduced_terms(u, &Vector2::zeros())?.potential)
    }

    /// Net static generalized force at `u`: springs plus `extra_tau` on the
    /// first joints, the wrench, minus gravity.
    pub fn static_residual(
        &mut self,
        u: &MinimalCoords,
        theta: &Vector3<f64>,
        extra_tau: &Vector3<f64>,
        wrench: &Wrench,
    ) -> Result<Vector2<f64>> {
        let terms = self.reduced_terms(u, &Vector2::zeros())?;
        let tau = self.elastic_torques(&terms.snapshot, theta)? + extra_tau;
        let f = applied_forces(&terms.snapshot, &tau, wrench, &self.params.payload_point())?;
        Ok(f - terms.g_u)
    }

    /// Static equilibrium posture for fixed motor angles, by Newton iteration
    /// with a central-difference Jacobian.
    pub fn static_equilibrium(
        &mut self,
        theta: &Vector3<f64>,
        extra_tau: &Vector3<f64>,
        wrench: &Wrench,
        guess: &MinimalCoords,
    ) -> Result<MinimalCoords> {
        let mut u = guess.to_vector();
        let h = 1e-7;
        for _ in 0..60 {
            let at = |p: &mut Self, x: Vector2<f64>| {
                p.static_residual(&MinimalCoords::from_vector(&x), theta, extra_tau, wrench)
            };
            let r = at(self, u)?;
            let mut jac = Matrix2::zeros();
            for j in 0..2 {
                let e = if j == 0 { Vector2::x() } else { Vector2::y() } * h;
                let col = (at(self, u + e)? - at(self, u - e)?) / (2.0 * h);
                jac.set_column(j, &col);
            }
            let step = jac
                .lu()
                .solve(&r)
                .ok_or_else(|| WristError::Singularity("static stiffness is singular".into()))?;
            let scale = step.amax();
            u -= if scale > 0.2 { step * (0.2 / scale) } else { step };
            if scale < 1e-14 {
                break;
            }
        }
        let u = MinimalCoords::from_vector(&u);
        let r = self.static_residual(&u, theta, extra_tau, wrench)?;
        if r.amax() > 1e-8 {
            return Err(WristError::ModelInconsistency(format!(
                "static equilibrium not found (residual {:.3e} N·mm)",
                r.amax()
            )));
        }
        Ok(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plant(params: DynParams) -> Plant {
        Plant::new(MechanismGeometry::default(), params, [SpringParams::default(); 3]).unwrap()
    }

    #[test]
    fn default_params_are_valid() {
        DynParams::default().validate().unwrap();
    }

    #[test]
    fn inertia_validation_is_field_precise() {
        let mut p = DynParams::default();
        p.links[1].inertia[0][0] = 100.0;
        let err = p.validate().unwrap_err();
        assert!(err.to_string().contains("dynamics.links[1].inertia"), "{err}");
        let mut p = DynParams::default();
        p.motor_tau = 0.0;
        assert!(p.validate().unwrap_err().to_string().contains("motor_tau"));
    }

    #[test]
    fn motor_lag_step_response() {
        let th = motor_step(&Vector3::zeros(), &Vector3::repeat(1.0), 0.02, 0.02);
        assert!((th[0] - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert!((th[0] - 0.632).abs() < 0.01 * 0.632);
        let c = Vector3::new(0.3, -0.1, 2.0);
        assert_eq!(motor_step(&c, &c, 1e-4, 0.02), c);
    }

    #[test]
    fn motor_lag_composes_exactly() {
        let (c, t0) = (Vector3::new(1.0, -2.0, 0.5), Vector3::zeros());
        let mut th = t0;
        for _ in 0..100 {
            th = motor_step(&th, &c, 1e-3, 0.02);
        }
        let once = motor_step(&t0, &c, 0.1, 0.02);
        assert!((th - once).amax() < 1e-12);
    }

    #[test]
    fn elastic_actuation_pulls_toward_motor() {
        let s = [SpringParams::default(); 3];
        let q1 = Vector3::new(0.1, 0.2, 0.3);
        assert_eq!(elastic_actuation(&q1, &q1, &s).unwrap(), Vector3::zeros());
        let theta = q1 - Vector3::repeat(0.001);
        let tau = elastic_actuation(&q1, &theta, &s).unwrap();
        for i in 0..3 {
            let linear = -25.0 * 0.001;
            assert!(tau[i] < 0.0);
            assert!((tau[i] - linear).abs() < 0.01 * linear.abs());
        }
    }

    #[test]
    fn centred_payload_on_axis_has_no_gravity_torque() {
        let mut p = plant(DynParams::default());
        let t = p.reduced_terms(&MinimalCoords::CENTER, &Vector2::zeros()).unwrap();
        assert!(t.g_u.amax() < 1e-12, "{}", t.g_u);
        assert!(t.h_u.amax() < 1e-15);
    }

    #[test]
    fn point_mass_payload_only() {
        let mut params = DynParams::default();
        for l in params.links.iter_mut() {
            *l = LinkInertia::point_mass(0.0, [0.0; 3]);
        }
        params.coupler = LinkInertia::point_mass(0.0, [0.0; 3]);
        let mut p = plant(params.clone());
        let u = MinimalCoords::new(0.3, -0.5);
        let t = p.reduced_terms(&u, &Vector2::zeros()).unwrap();
        let jv = t.snapshot.wrench_jacobian(&params.payload_point()).fixed_rows::<3>(0).into_owned();
        let expected = jv.transpose() * jv * params.payload_mass * MASS_SCALE;
        assert!((t.m_u - expected).amax() < 1e-12 * expected.amax());
    }

    #[test]
    fn gravity_term_is_potential_gradient() {
        let mut params = DynParams::default();
        params.gravity = [STANDARD_GRAVITY * 0.6, -STANDARD_GRAVITY * 0.8, 0.0];
        let mut p = plant(params);
        let h = 1e-6;
        for &(a, b) in &[(0.2, 0.1), (-0.7, 0.4), (0.5, -0.9)] {
            let u = MinimalCoords::new(a, b);
            let g = p.reduced_terms(&u, &Vector2::zeros()).unwrap().g_u;
            for j in 0..2 {
                let e = if j == 0 { Vector2::x() } else { Vector2::y() } * h;
                let v = |x: Vector2<f64>, p: &mut Plant| p.gravity_potential(&MinimalCoords::from_vector(&x)).unwrap();
                let fd = (v(u.to_vector() + e, &mut p) - v(u.to_vector() - e, &mut p)) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-5 * g.amax(), "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn zero_gravity_rest_is_invariant() {
        let mut params = DynParams::default();
        params.gravity = [0.0; 3];
        let mut p = plant(params);
        let u = MinimalCoords::new(0.2, 0.3);
        let q1 = p.snapshot(&u).unwrap().joints.actuated();
        let s0 = SimState::at_rest(u, q1);
        let mut s = s0;
        for _ in 0..50 {
            s = p.step(&s, &PlantInputs::hold(&s), 1e-4).unwrap();
        }
        assert!((s.u.to_vector() - u.to_vector()).amax() < 1e-13);
        assert!(s.u_dot_vector().amax() < 1e-11);
    }

    #[test]
    fn leaving_the_workspace_halts() {
        let mut params = DynParams::default();
        params.gravity = [0.0; 3];
        let mut p = plant(params);
        let u = MinimalCoords::new(1.047, 0.0);
        let q1 = p.snapshot(&u).unwrap().joints.actuated();
        let mut s = SimState::at_rest(u, q1);
        s.u_dot = [5.0, 0.0];
        let err = p.step(&s, &PlantInputs::hold(&s), 1e-4).unwrap_err();
        assert!(matches!(err, WristError::SimulationHalt { .. }), "{err}");
    }

    #[test]
    fn damping_dissipates() {
        let mut p = plant(DynParams::default());
        let u = MinimalCoords::new(0.1, -0.2);
        let theta = p.snapshot(&MinimalCoords::CENTER).unwrap().joints.actuated();
        let mut s = SimState::at_rest(u, theta);
        let mut e = p.energy(&s).unwrap().total();
        for _ in 0..300 {
            s = p.step(&s, &PlantInputs::hold(&s), 1e-4).unwrap();
            let next = p.energy(&s).unwrap().total();
            assert!(next <= e + 1e-12 * e.abs());
            e = next;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn reduced_mass_is_spd(a in -1.0f64..1.0, b in -1.0f64..1.0, va in -3.0f64..3.0, vb in -3.0f64..3.0) {
            let mut p = plant(DynParams::default());
            let t = p.reduced_terms(&MinimalCoords::new(a, b), &Vector2::new(va, vb)).unwrap();
            prop_assert!(t.m_u.cholesky().is_some());
            prop_assert!((t.m_u[(0, 1)] - t.m_u[(1, 0)]).abs() <= 1e-9 * t.m_u.amax());
        }
    }
}
