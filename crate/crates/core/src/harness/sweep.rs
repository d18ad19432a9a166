use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::config::ScenarioConfig;
use super::scenario::write_atomic;
use crate::elasticity::{equilibrium_deflections, internal_torques, preload_compliance, symmetric_eigenvalues};
use crate::error::{Result, WristError};
use crate::kinematics::{LoopClosure, MinimalCoords};

/// Static compliance at the central posture for one preload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    /// Preload (N·mm).
    pub lambda: f64,
    /// Compliance eigenvalues, ascending (rad/(N·mm)).
    pub compliance_eig: [f64; 2],
    /// Equilibrium leg torques (N·m).
    pub tau_a: [f64; 3],
    /// Spring deflections (rad).
    pub deflection: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "lambda,compliance_eig_1,compliance_eig_2,tau_a_1,tau_a_2,tau_a_3,delta_1,delta_2,delta_3\n",
        );
        for r in &self.rows {
            let vals = [
                r.lambda,
                r.compliance_eig[0],
                r.compliance_eig[1],
                r.tau_a[0],
                r.tau_a[1],
                r.tau_a[2],
                r.deflection[0],
                r.deflection[1],
                r.deflection[2],
            ];
            let row: Vec<String> = vals.iter().map(|v| format!("{v:.12e}")).collect();
            writeln!(s, "{}", row.join(",")).expect("write to String");
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Evaluates the preload map at `u = (0, 0)` for each `λ`. Values outside the
/// configured `λ` bounds are rejected.
pub fn stiffness_sweep(cfg: &ScenarioConfig, lambdas: &[f64]) -> Result<SweepTable> {
    cfg.validate()?;
    let [lo, hi] = cfg.control.lm.lambda_bounds;
    let snap = LoopClosure::new(cfg.geometry)?.snapshot(&MinimalCoords::CENTER, None)?;
    let n = snap.nullspace_base()?;
    let mut rows = Vec::with_capacity(lambdas.len());
    for (i, &lambda) in lambdas.iter().enumerate() {
        if !(lambda.is_finite() && lambda >= lo && lambda <= hi) {
            return Err(WristError::config(
                format!("lambda[{i}]"),
                format!("{lambda} outside control.lm.lambda_bounds [{lo}, {hi}]"),
            ));
        }
        let c = preload_compliance(&snap, lambda, &cfg.springs)?;
        let delta = equilibrium_deflections(lambda, &n, &cfg.springs);
        rows.push(SweepRow {
            lambda,
            compliance_eig: symmetric_eigenvalues(&c),
            tau_a: (internal_torques(lambda, &n) * 1e-3).into(),
            deflection: delta.into(),
        });
    }
    Ok(SweepTable { rows })
}
