use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Event, ScenarioConfig};
use super::metrics::{rms_metrics, RmsReport};
use super::scenario::{run_scenario, write_atomic, TrajectoryLog};
use super::sweep::{stiffness_sweep, SweepTable};
use crate::control::StiffnessTarget;
use crate::error::Result;

/// Published figures the reproduction is compared against.
pub const REFERENCE_RMS_ERROR: [f64; 2] = [0.15, 0.007];
pub const REFERENCE_RMS_TORQUE: [f64; 2] = [0.07, 1.72];

pub const LOAD_MASS: f64 = 1.5;
pub const LOAD_TIME: f64 = 0.5;

/// Low- and high-stiffness loaded trials plus a central-posture sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ls: ScenarioConfig,
    pub hs: ScenarioConfig,
    pub sweep_lambdas: Vec<f64>,
    /// Start of the RMS window (s).
    pub rms_t_start: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut hs = loaded_trial("hs", HS_PRELOAD);
        hs.control.lm.lambda_bounds = [-HS_LAMBDA_BOUND, HS_LAMBDA_BOUND];
        for s in &mut hs.springs {
            s.delta_max = HS_DELTA_MAX;
        }
        Self {
            ls: loaded_trial("ls", LS_PRELOAD),
            hs,
            sweep_lambdas: vec![0.0, 250.0, 500.0, 1000.0],
            rms_t_start: 0.0,
        }
    }
}

const LS_PRELOAD: f64 = 0.0;
const HS_PRELOAD: f64 = 16000.0;
const HS_LAMBDA_BOUND: f64 = 20000.0;
const HS_DELTA_MAX: f64 = 3.0;

/// Preload at t = 0, a quintic move to (0.3, −0.3) rad and the load at 0.5 s.
fn loaded_trial(name: &str, lambda: f64) -> ScenarioConfig {
    ScenarioConfig::new(name, 2.0)
        .with_event(0.0, Event::Stiffness(StiffnessTarget::Preload(lambda)))
        .with_event(0.1, Event::Posture { target: [0.3, -0.3], blend: 0.3 })
        .with_event(LOAD_TIME, Event::Load { mass: LOAD_MASS })
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.ls.validate()?;
        self.hs.validate()?;
        if !(self.rms_t_start.is_finite() && self.rms_t_start >= 0.0) {
            return Err(crate::error::WristError::config("rms_t_start", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            crate::error::WristError::config(format!("line {} column {}", e.line(), e.column()), e.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies a seed and physics step to both trials.
    pub fn override_run(&mut self, seed: Option<u64>, dt: Option<f64>) {
        for cfg in [&mut self.ls, &mut self.hs] {
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(dt) = dt {
                cfg.dynamics.dt = dt;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub name: String,
    pub rms: RmsReport,
    pub halt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub ls: TrialSummary,
    pub hs: TrialSummary,
    /// LS over HS RMS posture error.
    pub error_ratio: f64,
    /// HS over LS RMS torque.
    pub torque_ratio: f64,
    pub reference_rms_error: [f64; 2],
    pub reference_rms_torque: [f64; 2],
    pub error_ordering_holds: bool,
    pub torque_ordering_holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub ls: TrajectoryLog,
    pub hs: TrajectoryLog,
    pub sweep: SweepTable,
    pub summary: ExperimentSummary,
}

impl ExperimentResult {
    /// Writes `ls.csv`, `hs.csv`, `sweep.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.ls.save_csv(&dir.join("ls.csv"))?;
        self.hs.save_csv(&dir.join("hs.csv"))?;
        self.sweep.save_csv(&dir.join("sweep.csv"))?;
        let mut json = serde_json::to_string_pretty(&self.summary)?;
        json.push('\n');
        write_atomic(&dir.join("summary.json"), json.as_bytes())
    }
}

/// Runs both loaded trials in parallel and the sweep.
pub fn paper_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (ls, hs) = std::thread::scope(|s| {
        let ls = s.spawn(|| run_scenario(&cfg.ls));
        let hs = run_scenario(&cfg.hs);
        (ls.join().expect("LS trial panicked"), hs)
    });
    let (ls, hs) = (ls?, hs?);
    let sweep = stiffness_sweep(&cfg.ls, &cfg.sweep_lambdas)?;
    let trial = |log: &TrajectoryLog| -> Result<TrialSummary> {
        Ok(TrialSummary {
            name: log.name.clone(),
            rms: rms_metrics(log, cfg.rms_t_start)?,
            halt: log.halt.clone(),
        })
    };
    let (ls_sum, hs_sum) = (trial(&ls)?, trial(&hs)?);
    let error_ratio = ls_sum.rms.rms_error / hs_sum.rms.rms_error;
    let torque_ratio = hs_sum.rms.rms_torque / ls_sum.rms.rms_torque;
    let summary = ExperimentSummary {
        error_ordering_holds: error_ratio >= 5.0,
        torque_ordering_holds: torque_ratio > 1.0,
        ls: ls_sum,
        hs: hs_sum,
        error_ratio,
        torque_ratio,
        reference_rms_error: REFERENCE_RMS_ERROR,
        reference_rms_torque: REFERENCE_RMS_TORQUE,
    };
    Ok(ExperimentResult { ls, hs, sweep, summary })
}
