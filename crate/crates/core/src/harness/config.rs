use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{ControlParams, StiffnessTarget};
use crate::dynamics::{DynParams, Wrench};
use crate::elasticity::SpringParams;
use crate::error::{Result, WristError};
use crate::kinematics::{MechanismGeometry, MinimalCoords, NUM_LEGS};

pub const DEFAULT_LOG_RATE: f64 = 1000.0;

/// A complete, self-contained scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Simulated time (s).
    pub duration: f64,
    #[serde(default)]
    pub geometry: MechanismGeometry,
    #[serde(default = "default_springs")]
    pub springs: [SpringParams; NUM_LEGS],
    #[serde(default)]
    pub dynamics: DynParams,
    #[serde(default)]
    pub control: ControlParams,
    #[serde(default)]
    pub initial: InitialConditions,
    /// Samples per second in the trajectory log.
    #[serde(default = "default_log_rate")]
    pub log_rate: f64,
    #[serde(default)]
    pub timeline: Vec<TimedEvent>,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_springs() -> [SpringParams; NUM_LEGS] {
    [SpringParams::default(); NUM_LEGS]
}

fn default_log_rate() -> f64 {
    DEFAULT_LOG_RATE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    /// Starting posture `[α_y, α_z]` (rad).
    #[serde(default)]
    pub u: [f64; 2],
    /// Starting velocity (rad/s).
    #[serde(default)]
    pub u_dot: [f64; 2],
    /// Half-width of a uniform random perturbation added to `u_dot`, drawn
    /// from the scenario seed (rad/s).
    #[serde(default)]
    pub velocity_noise: f64,
}

impl Default for InitialConditions {
    fn default() -> Self {
        Self {
            u: [0.0; 2],
            u_dot: [0.0; 2],
            velocity_noise: 0.0,
        }
    }
}

impl InitialConditions {
    pub fn posture(&self) -> MinimalCoords {
        MinimalCoords::new(self.u[0], self.u[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedEvent {
    /// Event time (s).
    pub t: f64,
    pub event: Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    /// Move the posture reference to `target` with a quintic blend lasting
    /// `blend` seconds.
    Posture {
        target: [f64; 2],
        #[serde(default)]
        blend: f64,
    },
    /// New stiffness reference.
    Stiffness(StiffnessTarget),
    /// Gravitational load (kg) at the payload point; zero removes it.
    Load { mass: f64 },
    /// Additional external wrench `[f (N); m (N·mm)]` at the payload point.
    Wrench { value: [f64; 6] },
    /// Pronation-supination reference (rad).
    Pronation { angle: f64 },
}

impl ScenarioConfig {
    /// A scenario with default plant and controller.
    pub fn new(name: impl Into<String>, duration: f64) -> Self {
        Self {
            name: name.into(),
            seed: 0,
            duration,
            geometry: MechanismGeometry::default(),
            springs: default_springs(),
            dynamics: DynParams::default(),
            control: ControlParams::default(),
            initial: InitialConditions::default(),
            log_rate: DEFAULT_LOG_RATE,
            timeline: Vec::new(),
        }
    }

    pub fn with_event(mut self, t: f64, event: Event) -> Self {
        self.timeline.push(TimedEvent { t, event });
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            WristError::config(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Physics steps per controller tick.
    pub fn control_substeps(&self) -> Result<usize> {
        ratio(self.control.dt_ctrl, self.dynamics.dt, "control.dt_ctrl")
    }

    /// Physics steps per log sample.
    pub fn log_substeps(&self) -> Result<usize> {
        ratio(1.0 / self.log_rate, self.dynamics.dt, "log_rate")
    }

    /// Checks every parameter, reporting the first violation by field path.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(WristError::config("name", "must be non-empty and contain no path separators"));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(WristError::config("duration", "must be finite and >= 0"));
        }
        self.geometry.validate()?;
        for (i, s) in self.springs.iter().enumerate() {
            s.validate(&format!("springs[{i}]"))?;
        }
        self.dynamics.validate()?;
        self.control.validate()?;
        if !(self.log_rate.is_finite() && self.log_rate > 0.0) {
            return Err(WristError::config("log_rate", "must be finite and > 0"));
        }
        self.control_substeps()?;
        self.log_substeps()?;

        let u0 = self.initial.posture();
        self.geometry
            .check_workspace(&u0)
            .map_err(|e| WristError::config("initial.u", e.to_string()))?;
        if !self.initial.u_dot.iter().all(|v| v.is_finite()) {
            return Err(WristError::config("initial.u_dot", "must be finite"));
        }
        if !(self.initial.velocity_noise.is_finite() && self.initial.velocity_noise >= 0.0) {
            return Err(WristError::config("initial.velocity_noise", "must be finite and >= 0"));
        }

        let [lo, hi] = self.control.lm.lambda_bounds;
        let mut last = f64::NEG_INFINITY;
        for (i, ev) in self.timeline.iter().enumerate() {
            let field = format!("timeline[{i}]");
            if !(ev.t.is_finite() && ev.t >= 0.0) {
                return Err(WristError::config(format!("{field}.t"), "must be finite and >= 0"));
            }
            if ev.t < last {
                return Err(WristError::config(format!("{field}.t"), "events must be time-ordered"));
            }
            last = ev.t;
            match ev.event {
                Event::Posture { target, blend } => {
                    self.geometry
                        .check_workspace(&MinimalCoords::new(target[0], target[1]))
                        .map_err(|e| WristError::config(format!("{field}.event.posture.target"), e.to_string()))?;
                    if !(blend.is_finite() && blend >= 0.0) {
                        return Err(WristError::config(format!("{field}.event.posture.blend"), "must be finite and >= 0"));
                    }
                }
                Event::Stiffness(s) => {
                    s.validate(&format!("{field}.event.stiffness"))?;
                    if let StiffnessTarget::Preload(l) = s {
                        if l < lo || l > hi {
                            return Err(WristError::config(
                                format!("{field}.event.stiffness.preload"),
                                format!("{l} outside control.lm.lambda_bounds [{lo}, {hi}]"),
                            ));
                        }
                    }
                }
                Event::Load { mass } => {
                    if !(mass.is_finite() && mass >= 0.0) {
                        return Err(WristError::config(format!("{field}.event.load.mass"), "must be finite and >= 0"));
                    }
                }
                Event::Wrench { value } => {
                    if !value.iter().all(|v| v.is_finite()) {
                        return Err(WristError::config(format!("{field}.event.wrench.value"), "must be finite"));
                    }
                }
                Event::Pronation { angle } => {
                    if !angle.is_finite() {
                        return Err(WristError::config(format!("{field}.event.pronation.angle"), "must be finite"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Stiffness target in force at time zero: the first stiffness event at
    /// `t = 0`, else the controller's initial preload.
    pub fn initial_stiffness(&self) -> StiffnessTarget {
        self.timeline
            .iter()
            .take_while(|e| e.t <= 0.0)
            .filter_map(|e| match e.event {
                Event::Stiffness(s) => Some(s),
                _ => None,
            })
            .last()
            .unwrap_or(StiffnessTarget::Preload(self.control.lm.lambda_init))
    }
}

fn ratio(period: f64, dt: f64, field: &str) -> Result<usize> {
    let n = (period / dt).round();
    if !(n >= 1.0) || ((n * dt - period) / period).abs() > 1e-9 {
        return Err(WristError::config(
            field,
            format!("period {period} s must be a positive integer multiple of dynamics.dt = {dt} s"),
        ));
    }
    Ok(n as usize)
}

pub(crate) fn wrench_from(value: &[f64; 6]) -> Wrench {
    Wrench::from_column_slice(value)
}
