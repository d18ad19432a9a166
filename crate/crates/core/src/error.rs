use thiserror::Error;

pub type Result<T> = std::result::Result<T, WristError>;

#[derive(Debug, Error)]
pub enum WristError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate orientation: |cos(alpha_y)| = {cos_pitch:.3e} is within the gimbal-lock tolerance")]
    DegenerateOrientation { cos_pitch: f64 },

    #[error("unreachable pose: acos argument {argument:.12} outside [-1, 1]")]
    UnreachablePose { argument: f64 },

    #[error("posture ({alpha_y:.6}, {alpha_z:.6}) rad outside the workspace bound {u_max:.6} rad")]
    OutsideWorkspace { alpha_y: f64, alpha_z: f64, u_max: f64 },

    #[error("loop closure failed after {iterations} iterations (residual {residual:.3e})")]
    LoopClosureFailure { iterations: usize, residual: f64 },

    #[error("kinematic singularity: {0}")]
    Singularity(String),

    #[error("spring deflection {deflection:.6} rad exceeds the limit {limit:.6} rad")]
    SpringSaturation { deflection: f64, limit: f64 },

    #[error("coupler stiffness is singular (condition number {condition:.3e})")]
    SingularStiffness { condition: f64 },

    #[error("model inconsistency: {0}")]
    ModelInconsistency(String),

    #[error("simulation halted at t = {time:.6} s: {reason}")]
    SimulationHalt { time: f64, reason: String },

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("empty metrics window starting at t = {t_start} s")]
    EmptyWindow { t_start: f64 },

    #[error("invalid configuration field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl WristError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        WristError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Short diagnostic category, used by the CLI for exit codes and messages.
    pub fn category(&self) -> &'static str {
        match self {
            WristError::Config { .. } | WristError::Json(_) => "config",
            WristError::Io(_) => "io",
            WristError::SimulationHalt { .. } => "simulation-halt",
            WristError::InvalidArgument(_) => "invalid-argument",
            WristError::EmptyWindow { .. } => "metrics",
            _ => "model",
        }
    }
}
