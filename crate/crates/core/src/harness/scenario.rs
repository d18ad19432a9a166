use std::io::Write;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{wrench_from, Event, ScenarioConfig};
use crate::control::{motor_references, ControlOutput, ControlReferences, Controller, StiffnessTarget};
use crate::dynamics::{Plant, PlantInputs, SimState, Wrench};
use crate::elasticity::{stiffness_from_jacobian, SpringState};
use crate::error::{Result, WristError};
use crate::kinematics::{LoopClosure, MinimalCoords};

/// CSV column order of a trajectory log.
pub const LOG_COLUMNS: [&str; 17] = [
    "t",
    "alpha_y",
    "alpha_z",
    "alpha_y_ref",
    "alpha_z_ref",
    "theta_1",
    "theta_2",
    "theta_3",
    "theta_ps",
    "tau_a_1",
    "tau_a_2",
    "tau_a_3",
    "lambda",
    "sigma_eig_1",
    "sigma_eig_2",
    "G_lambda",
    "e_rms_inst",
];

/// One logged instant. Torques in N·m, `λ` in N·mm, stiffness eigenvalues in
/// N·mm/rad, ascending.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogSample {
    pub t: f64,
    pub u: [f64; 2],
    pub u_ref: [f64; 2],
    pub theta: [f64; 3],
    pub theta_ps: f64,
    pub tau_a: [f64; 3],
    pub lambda: f64,
    pub sigma_eig: [f64; 2],
    pub g_lambda: f64,
    pub e_rms_inst: f64,
}

impl LogSample {
    pub fn error(&self) -> [f64; 2] {
        [self.u_ref[0] - self.u[0], self.u_ref[1] - self.u[1]]
    }

    fn values(&self) -> [f64; 17] {
        [
            self.t,
            self.u[0],
            self.u[1],
            self.u_ref[0],
            self.u_ref[1],
            self.theta[0],
            self.theta[1],
            self.theta[2],
            self.theta_ps,
            self.tau_a[0],
            self.tau_a[1],
            self.tau_a[2],
            self.lambda,
            self.sigma_eig[0],
            self.sigma_eig[1],
            self.g_lambda,
            self.e_rms_inst,
        ]
    }
}

/// Uniformly sampled record of one run. `halt` holds the diagnostic when the
/// run stopped early.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryLog {
    pub name: String,
    pub samples: Vec<LogSample>,
    pub halt: Option<String>,
}

impl TrajectoryLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", LOG_COLUMNS.join(","))?;
        for s in &self.samples {
            let row: Vec<String> = s.values().iter().map(|v| format!("{v:.12e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV is ASCII"))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv()?.as_bytes())
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| WristError::Io(e.error))?;
    Ok(())
}

/// Quintic point-to-point blend between two postures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostureProfile {
    pub start: Vector2<f64>,
    pub target: Vector2<f64>,
    pub t0: f64,
    pub blend: f64,
}

impl PostureProfile {
    pub fn hold(u: Vector2<f64>) -> Self {
        Self {
            start: u,
            target: u,
            t0: 0.0,
            blend: 0.0,
        }
    }

    pub fn at(&self, t: f64) -> Vector2<f64> {
        if self.blend <= 0.0 || t >= self.t0 + self.blend {
            return if t >= self.t0 { self.target } else { self.start };
        }
        let s = ((t - self.t0) / self.blend).clamp(0.0, 1.0);
        let p = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
        self.start + (self.target - self.start) * p
    }
}

fn halt_reason(e: &WristError) -> String {
    format!("[{}] {e}", e.category())
}

/// Runs one scenario. Configuration errors are returned; a run that stops
/// early (workspace exit, spring saturation, solver failure) yields the
/// partial log with `halt` set.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TrajectoryLog> {
    cfg.validate()?;
    let mut log = TrajectoryLog {
        name: cfg.name.clone(),
        samples: Vec::new(),
        halt: None,
    };
    if cfg.duration <= 0.0 {
        return Ok(log);
    }
    let dt = cfg.dynamics.dt;
    let n_ctrl = cfg.control_substeps()?;
    let n_log = cfg.log_substeps()?;
    let total = (cfg.duration / dt).round() as usize;

    let mut plant = Plant::new(cfg.geometry, cfg.dynamics.clone(), cfg.springs)?;
    let mut controller = Controller::new(
        cfg.geometry,
        cfg.springs,
        cfg.control,
        cfg.dynamics.motor_tau,
        cfg.dynamics.ps_tau,
    )?;

    let u0 = cfg.initial.posture();
    let mut refs = ControlReferences {
        u_ref: u0,
        theta_ps_ref: 0.0,
        stiffness: cfg.initial_stiffness(),
    };
    let lambda0 = match refs.stiffness {
        StiffnessTarget::Preload(l) => l,
        StiffnessTarget::Compliance(_) => cfg.control.lm.lambda_init,
    };
    let start = LoopClosure::new(cfg.geometry)?.snapshot(&u0, None)?;
    let theta0 = motor_references(
        &start.joints.actuated(),
        lambda0,
        &start.nullspace_base()?,
        &cfg.springs,
    );
    let mut state = SimState::at_rest(u0, theta0);
    state.lambda_r = lambda0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let a = cfg.initial.velocity_noise;
    for (i, v) in state.u_dot.iter_mut().enumerate() {
        *v = cfg.initial.u_dot[i] + if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
    }

    let mut profile = PostureProfile::hold(u0.to_vector());
    let mut load = Wrench::zeros();
    let mut extra = Wrench::zeros();
    let mut next_event = 0;
    let mut output: Option<ControlOutput> = None;
    let mut inputs = PlantInputs::hold(&state);

    for step in 0..=total {
        let t = step as f64 * dt;
        while next_event < cfg.timeline.len() && cfg.timeline[next_event].t <= t + 0.5 * dt {
            let ev = cfg.timeline[next_event];
            match ev.event {
                Event::Posture { target, blend } => {
                    profile = PostureProfile {
                        start: profile.at(t),
                        target: Vector2::from(target),
                        t0: ev.t,
                        blend,
                    };
                }
                Event::Stiffness(s) => refs.stiffness = s,
                Event::Load { mass } => load = cfg.dynamics.load_wrench(mass),
                Event::Wrench { value } => extra = wrench_from(&value),
                Event::Pronation { angle } => refs.theta_ps_ref = angle,
            }
            next_event += 1;
        }
        refs.u_ref = MinimalCoords::from_vector(&profile.at(t));

        if step % n_ctrl == 0 {
            match controller.tick(&state, &refs) {
                Ok(out) => {
                    state.lambda_r = out.lambda;
                    inputs = PlantInputs {
                        motor_command: out.motor_command,
                        ps_command: out.ps_command,
                        wrench: load + extra,
                    };
                    output = Some(out);
                }
                Err(e) => {
                    log.halt = Some(halt_reason(&e));
                    break;
                }
            }
        }
        inputs.wrench = load + extra;

        if step % n_log == 0 {
            match sample(&mut plant, &state, &refs, output.as_ref()) {
                Ok(s) => log.samples.push(s),
                Err(e) => {
                    log.halt = Some(halt_reason(&e));
                    break;
                }
            }
        }
        if step == total {
            break;
        }
        match plant.step(&state, &inputs, dt) {
            Ok(mut next) => {
                next.t = (step + 1) as f64 * dt;
                state = next;
            }
            Err(e) => {
                log.halt = Some(halt_reason(&e));
                break;
            }
        }
    }
    Ok(log)
}

fn sample(
    plant: &mut Plant,
    state: &SimState,
    refs: &ControlReferences,
    output: Option<&ControlOutput>,
) -> Result<LogSample> {
    let snap = plant.snapshot(&state.u)?;
    let theta: Vector3<f64> = state.theta_vector();
    let tau = plant.elastic_torques(&snap, &theta)?;
    let deflection = SpringState::from_angles(&snap.joints.actuated(), &theta).as_vector();
    let sigma = stiffness_from_jacobian(&snap.actuation_jacobian()?, &deflection, plant.springs())?;
    let e = refs.u_ref.to_vector() - state.u.to_vector();
    Ok(LogSample {
        t: state.t,
        u: [state.u.alpha_y, state.u.alpha_z],
        u_ref: [refs.u_ref.alpha_y, refs.u_ref.alpha_z],
        theta: state.theta,
        theta_ps: state.theta_ps,
        tau_a: (tau * 1e-3).into(),
        lambda: state.lambda_r,
        sigma_eig: sigma.eigenvalues(),
        g_lambda: output.map_or(0.0, |o| o.objective),
        e_rms_inst: (e.norm_squared() / 2.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quintic_blend_endpoints() {
        let p = PostureProfile {
            start: Vector2::new(0.0, 0.0),
            target: Vector2::new(0.3, -0.3),
            t0: 0.1,
            blend: 0.2,
        };
        assert_eq!(p.at(0.0), p.start);
        assert!((p.at(0.3) - p.target).amax() < 1e-12);
        assert_eq!(p.at(0.5), p.target);
        assert!((p.at(0.2) - Vector2::new(0.15, -0.15)).amax() < 1e-15);
    }

    #[test]
    fn zero_duration_gives_header_only_log() {
        let log = run_scenario(&ScenarioConfig::new("empty", 0.0)).unwrap();
        assert!(log.samples.is_empty());
        assert_eq!(log.to_csv().unwrap().lines().count(), 1);
    }

    #[test]
    fn log_is_uniform() {
        let log = run_scenario(&ScenarioConfig::new("hold", 0.05)).unwrap();
        assert!(log.halt.is_none());
        assert_eq!(log.samples.len(), 51);
        for (k, s) in log.samples.iter().enumerate() {
            assert!((s.t - k as f64 * 1e-3).abs() < 1e-12);
        }
    }
}
