//! Nonlinear elastic transmission and the coupler stiffness it induces.
//!
//! Each leg's first joint is connected to its motor through a spring with
//! torque `τ_s = −2K·sinh(δ/δ₀)`, `δ = q1 − θ`. Because the law is
//! nonlinear, the transmission stiffness `σ_s = (2K/δ₀)·cosh(δ/δ₀)` grows with
//! the deflection, so preloading the legs against each other stiffens the
//! coupler.

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WristError};
use crate::kinematics::{MechanismGeometry, MinimalCoords, Snapshot, LoopClosure, NUM_LEGS};

pub const DEFAULT_SPRING_K: f64 = 4.0;
pub const DEFAULT_SPRING_DELTA0: f64 = 0.32;
pub const DEFAULT_DELTA_MAX: f64 = 2.5;
/// Largest accepted condition number of `Σ_c` when inverting it.
pub const MAX_STIFFNESS_CONDITION: f64 = 1e12;

/// Spring law parameters of one leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpringParams {
    /// Elastic scale `K` (N·mm).
    pub k: f64,
    /// Deflection scale `δ₀` (rad).
    pub delta0: f64,
    /// Largest admissible `|δ|` (rad).
    #[serde(default = "default_delta_max")]
    pub delta_max: f64,
}

fn default_delta_max() -> f64 {
    DEFAULT_DELTA_MAX
}

impl Default for SpringParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_SPRING_K,
            delta0: DEFAULT_SPRING_DELTA0,
            delta_max: DEFAULT_DELTA_MAX,
        }
    }
}

impl SpringParams {
    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(WristError::config(format!("{field}.k"), "must be finite and > 0"));
        }
        if !(self.delta0.is_finite() && self.delta0 > 0.0) {
            return Err(WristError::config(format!("{field}.delta0"), "must be finite and > 0"));
        }
        if !(self.delta_max.is_finite() && self.delta_max > 0.0) {
            return Err(WristError::config(format!("{field}.delta_max"), "must be finite and > 0"));
        }
        if self.delta_max / self.delta0 > 700.0 {
            return Err(WristError::config(
                format!("{field}.delta_max"),
                "delta_max/delta0 must stay below 700 to keep cosh finite",
            ));
        }
        Ok(())
    }

    fn check(&self, delta: f64) -> Result<()> {
        if !delta.is_finite() || delta.abs() > self.delta_max {
            return Err(WristError::SpringSaturation {
                deflection: delta,
                limit: self.delta_max,
            });
        }
        Ok(())
    }
}

/// Per-leg deflections `δ = q1 − θ` (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpringState {
    pub deflection: [f64; NUM_LEGS],
}

impl SpringState {
    pub fn from_angles(q1: &Vector3<f64>, theta: &Vector3<f64>) -> Self {
        let d = q1 - theta;
        Self {
            deflection: [d[0], d[1], d[2]],
        }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::from(self.deflection)
    }
}

/// `τ_s = −2K·sinh(δ/δ₀)` (N·mm).
pub fn spring_torque(delta: f64, p: &SpringParams) -> Result<f64> {
    p.check(delta)?;
    Ok(-2.0 * p.k * (delta / p.delta0).sinh())
}

/// `σ_s = (2K/δ₀)·cosh(δ/δ₀)` (N·mm/rad), equal to `−dτ_s/dδ`.
pub fn spring_stiffness(delta: f64, p: &SpringParams) -> Result<f64> {
    p.check(delta)?;
    Ok(2.0 * p.k / p.delta0 * (delta / p.delta0).cosh())
}

/// Stored energy `V_s = 2Kδ₀(cosh(δ/δ₀) − 1)` (N·mm), so that `τ_s = −dV_s/dδ`.
pub fn spring_potential(delta: f64, p: &SpringParams) -> f64 {
    2.0 * p.k * p.delta0 * ((delta / p.delta0).cosh() - 1.0)
}

/// Coupler stiffness `Σ_c` in minimal coordinates (N·mm/rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplerStiffness {
    pub matrix: Matrix2<f64>,
}

impl CouplerStiffness {
    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        symmetric_eigenvalues(&self.matrix)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// `c = Σ_c⁻¹` (rad/(N·mm)).
    pub fn compliance(&self) -> Result<Matrix2<f64>> {
        let [lo, hi] = self.eigenvalues();
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_STIFFNESS_CONDITION) {
            return Err(WristError::SingularStiffness { condition });
        }
        self.matrix
            .try_inverse()
            .map(|c| (c + c.transpose()) * 0.5)
            .ok_or(WristError::SingularStiffness { condition })
    }
}

/// Ascending eigenvalues of a symmetric 2×2 matrix.
pub fn symmetric_eigenvalues(m: &Matrix2<f64>) -> [f64; 2] {
    let mean = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let r = half_diff.hypot(off);
    [mean - r, mean + r]
}

/// Diagonal `Σ_s` of per-leg transmission stiffnesses.
pub fn transmission_stiffness(
    deflections: &Vector3<f64>,
    params: &[SpringParams; NUM_LEGS],
) -> Result<Matrix3<f64>> {
    let mut sigma = Matrix3::zeros();
    for i in 0..NUM_LEGS {
        sigma[(i, i)] = spring_stiffness(deflections[i], &params[i])?;
    }
    Ok(sigma)
}

/// `Σ_c = J_aᵀ Σ_s J_a` for a given actuation Jacobian.
pub fn stiffness_from_jacobian(
    ja: &Matrix3x2<f64>,
    deflections: &Vector3<f64>,
    params: &[SpringParams; NUM_LEGS],
) -> Result<CouplerStiffness> {
    let sigma = transmission_stiffness(deflections, params)?;
    let m = ja.transpose() * sigma * ja;
    Ok(CouplerStiffness {
        matrix: (m + m.transpose()) * 0.5,
    })
}

/// `Σ_c` at the posture of `snapshot`.
pub fn coupler_stiffness(
    snapshot: &Snapshot,
    deflections: &Vector3<f64>,
    params: &[SpringParams; NUM_LEGS],
) -> Result<CouplerStiffness> {
    stiffness_from_jacobian(&snapshot.actuation_jacobian()?, deflections, params)
}

/// `c = Σ_c⁻¹` at the posture of `snapshot`.
pub fn coupler_compliance(
    snapshot: &Snapshot,
    deflections: &Vector3<f64>,
    params: &[SpringParams; NUM_LEGS],
) -> Result<Matrix2<f64>> {
    coupler_stiffness(snapshot, deflections, params)?.compliance()
}

/// Convenience form of [`coupler_stiffness`] that solves the posture first.
pub fn coupler_stiffness_at(
    geometry: &MechanismGeometry,
    u: &MinimalCoords,
    deflections: &Vector3<f64>,
    params: &[SpringParams; NUM_LEGS],
) -> Result<CouplerStiffness> {
    let snap = LoopClosure::new(*geometry)?.snapshot(u, None)?;
    coupler_stiffness(&snap, deflections, params)
}

/// `τ_σ = λ·N` (N·mm).
pub fn internal_torques(lambda: f64, n: &Vector3<f64>) -> Vector3<f64> {
    n * lambda
}

/// Deflections that hold `τ_σ = λN`: `δ_i = −δ₀·asinh(λN_i / 2K)`.
pub fn equilibrium_deflections(
    lambda: f64,
    n: &Vector3<f64>,
    params: &[SpringParams; NUM_LEGS],
) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        let p = &params[i];
        -p.delta0 * (lambda * n[i] / (2.0 * p.k)).asinh()
    })
}

/// Compliance reached by preload `λ` at the posture of `snapshot`.
pub fn preload_compliance(
    snapshot: &Snapshot,
    lambda: f64,
    params: &[SpringParams; NUM_LEGS],
) -> Result<Matrix2<f64>> {
    let n = snapshot.nullspace_base()?;
    let deflections = equilibrium_deflections(lambda, &n, params);
    coupler_compliance(snapshot, &deflections, params)
}

/// Generalized force on `u` produced by actuated torques: `J_aᵀ τ_a`.
pub fn generalized_actuation(ja: &Matrix3x2<f64>, tau_a: &Vector3<f64>) -> Vector2<f64> {
    ja.transpose() * tau_a
}
