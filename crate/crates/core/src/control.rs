//! Posture references, preload regulation and the motor position loop.
//!
//! Posture and stiffness are commanded independently. The posture fixes the
//! first-joint references through the leg IK; the stiffness is a single
//! scalar preload `λ` along the kernel direction `N`, driven toward a target
//! compliance by a damped Newton flow on `G(λ) = ‖c(λ) − c_ref‖_F`. The two
//! combine into motor references by inverting the spring law.

use nalgebra::{Matrix2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::SimState;
use crate::elasticity::{preload_compliance, SpringParams};
use crate::error::{Result, WristError};
use crate::kinematics::{LoopClosure, MechanismGeometry, MinimalCoords, Snapshot, NUM_LEGS};

pub const DEFAULT_KP: f64 = 40.0;
pub const DEFAULT_DT_CTRL: f64 = 1e-3;
pub const DEFAULT_FLOW_GAIN: f64 = 50.0;
/// Flow damping in (rad/(N·mm)²)², well below typical `H_g²` (1e-12 .. 1e-6).
pub const DEFAULT_FLOW_DAMPING: f64 = 1e-16;
pub const DEFAULT_LAMBDA_INIT: f64 = 100.0;
pub const DEFAULT_LAMBDA_BOUND: f64 = 1000.0;
pub const DEFAULT_LAMBDA_RATE_MAX: f64 = 5000.0;
/// Central-difference step for `H_g` (N·mm).
pub const FLOW_FD_STEP: f64 = 1e-3;

/// What the stiffness channel tracks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StiffnessTarget {
    /// Compliance in minimal coordinates (rad/(N·mm)), reached through the
    /// `λ` flow.
    Compliance([[f64; 2]; 2]),
    /// Preload held directly (N·mm); the flow is bypassed.
    Preload(f64),
}

impl StiffnessTarget {
    pub fn validate(&self, field: &str) -> Result<()> {
        match self {
            StiffnessTarget::Preload(l) if !l.is_finite() => {
                Err(WristError::config(format!("{field}.preload"), "must be finite"))
            }
            StiffnessTarget::Compliance(c) => {
                let m = to_matrix(c);
                if !m.iter().all(|v| v.is_finite()) {
                    return Err(WristError::config(format!("{field}.compliance"), "must be finite"));
                }
                if (m - m.transpose()).amax() > 1e-12 * m.amax() {
                    return Err(WristError::config(format!("{field}.compliance"), "must be symmetric"));
                }
                if m.cholesky().is_none() {
                    return Err(WristError::config(format!("{field}.compliance"), "must be positive definite"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn to_matrix(c: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlReferences {
    pub u_ref: MinimalCoords,
    pub theta_ps_ref: f64,
    pub stiffness: StiffnessTarget,
}

/// Parameters of the `λ` flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LMParams {
    /// Convergence gain `α` (1/s).
    pub alpha: f64,
    /// Damping `ν`, in the units of `H_g²`.
    pub nu: f64,
    /// N·mm
    pub lambda_init: f64,
    /// `[λ_min, λ_max]` (N·mm).
    pub lambda_bounds: [f64; 2],
    /// Cap on `|λ̇|` (N·mm/s). Near an unreachable optimum `H_g → 0` while
    /// `G > 0` and the undamped flow speed diverges; the cap bounds the
    /// resulting chatter.
    #[serde(default = "default_rate_max")]
    pub lambda_rate_max: f64,
}

fn default_rate_max() -> f64 {
    DEFAULT_LAMBDA_RATE_MAX
}

impl Default for LMParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_FLOW_GAIN,
            nu: DEFAULT_FLOW_DAMPING,
            lambda_init: DEFAULT_LAMBDA_INIT,
            lambda_bounds: [-DEFAULT_LAMBDA_BOUND, DEFAULT_LAMBDA_BOUND],
            lambda_rate_max: DEFAULT_LAMBDA_RATE_MAX,
        }
    }
}

impl LMParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(WristError::config("control.lm.alpha", "must be finite and > 0"));
        }
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(WristError::config("control.lm.nu", "must be finite and > 0"));
        }
        let [lo, hi] = self.lambda_bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(WristError::config("control.lm.lambda_bounds", "must be finite and ordered"));
        }
        if !(self.lambda_rate_max > 0.0) {
            return Err(WristError::config("control.lm.lambda_rate_max", "must be > 0"));
        }
        if !(self.lambda_init >= lo && self.lambda_init <= hi) {
            return Err(WristError::config("control.lm.lambda_init", "must lie within lambda_bounds"));
        }
        Ok(())
    }

    pub fn clamp(&self, lambda: f64) -> f64 {
        lambda.clamp(self.lambda_bounds[0], self.lambda_bounds[1])
    }
}

/// First-joint references `q1_ref` of each leg at the posture of `snapshot`.
pub fn posture_reference(snapshot: &Snapshot) -> Vector3<f64> {
    snapshot.joints.actuated()
}

/// `G(λ) = ‖c(λ) − c_ref‖_F` at the posture of `snapshot`.
pub fn compliance_objective(
    lambda: f64,
    snapshot: &Snapshot,
    c_ref: &Matrix2<f64>,
    springs: &[SpringParams; NUM_LEGS],
) -> Result<f64> {
    let c = preload_compliance(snapshot, lambda, springs)?;
    Ok((c - c_ref).norm())
}

/// `G` and its slope `H_g = ⟨c − c_ref, dc/dλ⟩ / G`.
///
/// `G` has a kink where it reaches zero, so differencing `G` itself would
/// straddle the kink and make the flow chatter; `dc/dλ` is smooth and is
/// taken by central differences instead.
pub fn objective_and_slope(
    lambda: f64,
    snapshot: &Snapshot,
    c_ref: &Matrix2<f64>,
    springs: &[SpringParams; NUM_LEGS],
) -> Result<(f64, f64)> {
    let h = FLOW_FD_STEP;
    let delta = preload_compliance(snapshot, lambda, springs)? - c_ref;
    let dc = (preload_compliance(snapshot, lambda + h, springs)?
        - preload_compliance(snapshot, lambda - h, springs)?)
        / (2.0 * h);
    let g = delta.norm();
    let hg = delta.dot(&dc);
    Ok((g, if g > 0.0 { hg / g } else { 0.0 }))
}

/// One explicit-Euler step of `λ̇ = −α H_g G / (H_g² + ν)`, rate-limited and
/// clamped to the bounds.
pub fn lambda_flow_step(
    lambda: f64,
    snapshot: &Snapshot,
    c_ref: &Matrix2<f64>,
    lm: &LMParams,
    springs: &[SpringParams; NUM_LEGS],
    dt: f64,
) -> Result<f64> {
    let (g, h) = objective_and_slope(lambda, snapshot, c_ref, springs)?;
    let rate = (-lm.alpha * h * g / (h * h + lm.nu)).clamp(-lm.lambda_rate_max, lm.lambda_rate_max);
    Ok(lm.clamp(lambda + rate * dt))
}

/// `θ_ref = q1_ref + δ₀ asinh(λN / 2K)` per leg.
pub fn motor_references(
    q1_ref: &Vector3<f64>,
    lambda: f64,
    n: &Vector3<f64>,
    springs: &[SpringParams; NUM_LEGS],
) -> Vector3<f64> {
    Vector3::from_fn(|i, _| {
        let s = &springs[i];
        q1_ref[i] + s.delta0 * (lambda * n[i] / (2.0 * s.k)).asinh()
    })
}

/// Position command for the low-pass motors: `θ + k_p τ_m (θ_ref − θ)`, so
/// the closed loop obeys `θ̇ = k_p (θ_ref − θ)`.
pub fn proportional_control(
    theta_ref: &Vector3<f64>,
    theta: &Vector3<f64>,
    kp: f64,
    motor_tau: f64,
) -> Vector3<f64> {
    theta + (theta_ref - theta) * (kp * motor_tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlParams {
    /// Motor position gain (1/s).
    pub kp: f64,
    /// Controller period (s).
    pub dt_ctrl: f64,
    pub lm: LMParams,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            kp: DEFAULT_KP,
            dt_ctrl: DEFAULT_DT_CTRL,
            lm: LMParams::default(),
        }
    }
}

impl ControlParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp.is_finite() && self.kp > 0.0) {
            return Err(WristError::config("control.kp", "must be finite and > 0"));
        }
        if !(self.dt_ctrl.is_finite() && self.dt_ctrl > 0.0) {
            return Err(WristError::config("control.dt_ctrl", "must be finite and > 0"));
        }
        self.lm.validate()
    }
}

/// Everything one controller tick decided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub motor_command: Vector3<f64>,
    pub ps_command: f64,
    pub lambda: f64,
    pub q1_ref: Vector3<f64>,
    pub theta_ref: Vector3<f64>,
    /// `G(λ)` after the update; zero when the preload is held directly.
    pub objective: f64,
}

/// Stateful controller: owns `λ` and a kinematic cache for `u_ref`.
#[derive(Debug, Clone)]
pub struct Controller {
    closure: LoopClosure,
    springs: [SpringParams; NUM_LEGS],
    params: ControlParams,
    motor_tau: f64,
    ps_tau: f64,
    lambda: f64,
    cache: Option<Snapshot>,
}

impl Controller {
    pub fn new(
        geometry: MechanismGeometry,
        springs: [SpringParams; NUM_LEGS],
        params: ControlParams,
        motor_tau: f64,
        ps_tau: f64,
    ) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            closure: LoopClosure::new(geometry)?,
            springs,
            params,
            motor_tau,
            ps_tau,
            lambda: params.lm.lambda_init,
            cache: None,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn params(&self) -> &ControlParams {
        &self.params
    }

    /// Kinematics at `u_ref`, recomputed only when the reference moves.
    pub fn reference_snapshot(&mut self, u_ref: &MinimalCoords) -> Result<&Snapshot> {
        let stale = self.cache.as_ref().is_none_or(|s| s.u != *u_ref);
        if stale {
            let seed = self.cache.as_ref().map(|s| s.pose);
            self.cache = Some(self.closure.snapshot(u_ref, seed.as_ref())?);
        }
        Ok(self.cache.as_ref().expect("cache filled above"))
    }

    /// posture reference → λ update → motor references → P loop.
    pub fn tick(&mut self, state: &SimState, refs: &ControlReferences) -> Result<ControlOutput> {
        let dt = self.params.dt_ctrl;
        let lm = self.params.lm;
        let springs = self.springs;
        let lambda = self.lambda;
        let snap = self.reference_snapshot(&refs.u_ref)?;
        let q1_ref = posture_reference(snap);
        let (lambda, objective) = match refs.stiffness {
            StiffnessTarget::Preload(l) => (l, 0.0),
            StiffnessTarget::Compliance(c) => {
                let c_ref = to_matrix(&c);
                let next = lambda_flow_step(lambda, snap, &c_ref, &lm, &springs, dt)?;
                (next, compliance_objective(next, snap, &c_ref, &springs)?)
            }
        };
        let n = snap.nullspace_base()?;
        let theta_ref = motor_references(&q1_ref, lambda, &n, &springs);
        self.lambda = lambda;
        let theta = state.theta_vector();
        let motor_command = proportional_control(&theta_ref, &theta, self.params.kp, self.motor_tau);
        let ps_command =
            state.theta_ps + (refs.theta_ps_ref - state.theta_ps) * (self.params.kp * self.ps_tau);
        Ok(ControlOutput {
            motor_command,
            ps_command,
            lambda,
            q1_ref,
            theta_ref,
            objective,
        })
    }
}
