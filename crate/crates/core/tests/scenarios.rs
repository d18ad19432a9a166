use std::process::Command;

use vswrist::control::StiffnessTarget;
use vswrist::elasticity::preload_compliance;
use vswrist::harness::{rms_metrics, rms_streaming, run_scenario, Event, ScenarioConfig};
use vswrist::kinematics::{LoopClosure, MechanismGeometry, MinimalCoords};

fn compliance_at(u: MinimalCoords, lambda: f64) -> [[f64; 2]; 2] {
    let lc = LoopClosure::new(MechanismGeometry::default()).unwrap();
    let c = preload_compliance(&lc.snapshot(&u, None).unwrap(), lambda, &Default::default()).unwrap();
    [[c[(0, 0)], c[(0, 1)]], [c[(1, 0)], c[(1, 1)]]]
}

#[test]
fn centred_start_stays_at_rest() {
    let log = run_scenario(&ScenarioConfig::new("rest", 0.5)).unwrap();
    assert!(log.halt.is_none());
    for s in &log.samples {
        assert!(s.u[0].abs() < 1e-9 && s.u[1].abs() < 1e-9, "{:?}", s.u);
    }
}

#[test]
fn steady_torques_equal_internal_preload() {
    let lambda = 400.0;
    let cfg = ScenarioConfig::new("preload", 0.6).with_event(0.0, Event::Stiffness(StiffnessTarget::Preload(lambda)));
    let log = run_scenario(&cfg).unwrap();
    let last = log.samples.last().unwrap();
    let n = LoopClosure::new(MechanismGeometry::default())
        .unwrap()
        .snapshot(&MinimalCoords::CENTER, None)
        .unwrap()
        .nullspace_base()
        .unwrap();
    for i in 0..3 {
        let expected = lambda * n[i] * 1e-3;
        assert!((last.tau_a[i] - expected).abs() < 0.01 * expected.abs(), "{:?} vs {}", last.tau_a, expected);
    }
}

#[test]
fn stiffness_change_leaves_posture_alone() {
    let u = MinimalCoords::new(0.2, 0.1);
    let mut cfg = ScenarioConfig::new("decouple", 2.0)
        .with_event(0.0, Event::Stiffness(StiffnessTarget::Compliance(compliance_at(u, 150.0))))
        .with_event(0.8, Event::Stiffness(StiffnessTarget::Compliance(compliance_at(u, 600.0))));
    cfg.dynamics.gravity = [0.0; 3];
    cfg.dynamics.damping = [20.0; 12];
    cfg.initial.u = [u.alpha_y, u.alpha_z];
    let log = run_scenario(&cfg).unwrap();
    assert!(log.halt.is_none(), "{:?}", log.halt);
    let before = log.samples.iter().find(|s| s.t >= 0.79).unwrap();
    let after = log.samples.last().unwrap();
    assert!((after.lambda - 600.0).abs() < 1.0, "{}", after.lambda);
    assert!(after.theta != before.theta);
    for k in 0..2 {
        assert!((after.u[k] - [u.alpha_y, u.alpha_z][k]).abs() < 1e-6, "{:?}", after.u);
    }
}

#[test]
fn posture_excursion_returns_lambda() {
    let target = compliance_at(MinimalCoords::CENTER, 300.0);
    let mut cfg = ScenarioConfig::new("posture", 2.2)
        .with_event(0.0, Event::Stiffness(StiffnessTarget::Compliance(target)))
        .with_event(0.8, Event::Posture { target: [0.15, -0.1], blend: 0.1 })
        .with_event(1.3, Event::Posture { target: [0.0, 0.0], blend: 0.1 });
    cfg.dynamics.gravity = [0.0; 3];
    let log = run_scenario(&cfg).unwrap();
    let before = log.samples.iter().find(|s| s.t >= 0.79).unwrap().lambda;
    let during = log.samples.iter().find(|s| s.t >= 1.29).unwrap().lambda;
    let after = log.samples.last().unwrap().lambda;
    assert!((before - 300.0).abs() < 0.5, "{before}");
    assert!((during - before).abs() > 1.0, "{during}");
    assert!((after - before).abs() < 0.5, "{after} vs {before}");
}

#[test]
fn identical_configs_give_identical_logs() {
    let mut cfg = ScenarioConfig::new("noise", 0.3).with_event(0.1, Event::Load { mass: 0.5 });
    cfg.initial.velocity_noise = 0.2;
    cfg.seed = 7;
    let a = run_scenario(&cfg).unwrap().to_csv().unwrap();
    let b = run_scenario(&cfg).unwrap().to_csv().unwrap();
    assert_eq!(a, b);
    cfg.seed = 8;
    assert_ne!(a, run_scenario(&cfg).unwrap().to_csv().unwrap());
}

#[test]
fn workspace_exit_keeps_partial_log() {
    let mut cfg = ScenarioConfig::new("escape", 1.0);
    cfg.dynamics.gravity = [0.0; 3];
    cfg.initial.u = [0.9, 0.0];
    cfg.initial.u_dot = [40.0, 0.0];
    let log = run_scenario(&cfg).unwrap();
    let reason = log.halt.as_deref().expect("run should halt");
    assert!(reason.contains("simulation-halt"), "{reason}");
    assert!(!log.samples.is_empty() && log.samples.len() < 1001);
}

#[test]
fn rms_is_recomputable_from_the_log() {
    let cfg = ScenarioConfig::new("rms", 0.4)
        .with_event(0.0, Event::Posture { target: [0.1, 0.05], blend: 0.2 })
        .with_event(0.2, Event::Load { mass: 1.0 });
    let log = run_scenario(&cfg).unwrap();
    let a = rms_metrics(&log, 0.1).unwrap();
    let b = rms_streaming(&log, 0.1).unwrap();
    assert!((a.rms_error - b.rms_error).abs() <= 1e-12 * a.rms_error);
    assert!((a.rms_torque - b.rms_torque).abs() <= 1e-12 * a.rms_torque);
}

#[test]
fn cli_exit_codes_follow_error_category() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_vswrist");
    let good = dir.path().join("good.json");
    std::fs::write(&good, r#"{"name": "short", "duration": 0.01}"#).unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"duration": 1, "log_rate": 0}"#).unwrap();
    let run = |args: &[&str]| Command::new(bin).args(args).arg("--quiet").status().unwrap().code();

    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(run(&["validate", good.to_str().unwrap()]), Some(0));
    assert_eq!(run(&["run", "--config", good.to_str().unwrap(), "--out", out]), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("out/short.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    assert_eq!(run(&["sweep", good.to_str().unwrap(), "--lambda", "0,100", "--out", out]), Some(0));
    assert_eq!(run(&["sweep", good.to_str().unwrap(), "--lambda", "0,5000", "--out", out]), Some(2));
    assert_eq!(run(&["validate", bad.to_str().unwrap()]), Some(2));
    assert_eq!(run(&["run", dir.path().join("missing.json").to_str().unwrap()]), Some(4));
}
