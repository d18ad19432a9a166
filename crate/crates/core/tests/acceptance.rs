//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{Matrix2, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vswrist::control::{compliance_objective, lambda_flow_step, motor_references, LMParams};
use vswrist::dynamics::dae::DaeOracle;
use vswrist::dynamics::{DynParams, Plant, PlantInputs, SimState, Wrench};
use vswrist::elasticity::{
    coupler_stiffness, equilibrium_deflections, preload_compliance, spring_stiffness, spring_torque, SpringParams,
};
use vswrist::harness::{paper_experiment, ExperimentConfig};
use vswrist::kinematics::{leg_fk, leg_ik, LoopClosure, MechanismGeometry, MinimalCoords, Snapshot, DEFAULT_U_MAX};
use vswrist::spatial::vee_skew;

type Check = Result<String, String>;

const U_MAX: f64 = DEFAULT_U_MAX;
const FD_STEP: f64 = 1e-6;

fn closure() -> LoopClosure {
    LoopClosure::new(MechanismGeometry::default()).unwrap()
}

fn springs() -> [SpringParams; 3] {
    [SpringParams::default(); 3]
}

/// 10×10 grid over the workspace, pulled in by two FD steps so the
/// differences stay inside the bound.
fn grid() -> Vec<MinimalCoords> {
    let edge = U_MAX - 2.0 * FD_STEP;
    let at = |k: usize| -edge + 2.0 * edge * k as f64 / 9.0;
    (0..10).flat_map(|i| (0..10).map(move |j| MinimalCoords::new(at(i), at(j)))).collect()
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    a / b.max(f64::MIN_POSITIVE)
}

fn c1_roundtrip() -> Check {
    let start = Instant::now();
    let lc = closure();
    let legs = lc.geometry().legs();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut joint_err, mut loop_err) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let u = MinimalCoords::new(rng.random_range(-U_MAX..=U_MAX), rng.random_range(-U_MAX..=U_MAX));
        let s = lc.snapshot(&u, None).map_err(|e| format!("{u:?}: {e}"))?;
        let target = s.coupler_transform();
        for (i, leg) in legs.iter().enumerate() {
            let q = s.joints.legs[i];
            let reached = leg_fk(&q, leg);
            loop_err = loop_err
                .max((reached.translation - target.translation).amax())
                .max(vee_skew(&(target.rotation.transpose() * reached.rotation)).amax());
            let back = leg_ik(&reached, leg).map_err(|e| e.to_string())?;
            for (a, b) in back.to_array().iter().zip(q.to_array()) {
                joint_err = joint_err.max((a - b).abs());
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(
        joint_err < 1e-9 && loop_err < 1e-9 && elapsed < 5.0,
        format!("max joint error {joint_err:.2e} rad, loop residual {loop_err:.2e}, {elapsed:.2} s"),
    )
}

fn c2_structural_identities() -> Check {
    let lc = closure();
    let legs = lc.geometry().legs();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut evaluations = 0;
    for _ in 0..1000 {
        let u = MinimalCoords::new(rng.random_range(-U_MAX..=U_MAX), rng.random_range(-U_MAX..=U_MAX));
        let s = lc.snapshot(&u, None).map_err(|e| e.to_string())?;
        let mut sets = s.joints.legs.to_vec();
        for leg in &legs {
            sets.push(leg_ik(&s.coupler_transform(), leg).map_err(|e| e.to_string())?);
        }
        for q in sets {
            let [q1, q2, q3, q4] = q.to_array();
            if q3 != q2 + std::f64::consts::PI || q4 != -q1 {
                return Err(format!("identity broken at {u:?}: {:?}", q.to_array()));
            }
            evaluations += 1;
        }
    }
    Ok(format!("q3 = q2 + π and q4 = −q1 bit-exact on {evaluations} IK evaluations"))
}

fn fd_columns(lc: &LoopClosure, s: &Snapshot, f: impl Fn(&Snapshot) -> Vec<f64>) -> Vec<Vec<f64>> {
    (0..2)
        .map(|j| {
            let e = if j == 0 { Vector2::x() } else { Vector2::y() } * FD_STEP;
            let at = |v: Vector2<f64>| f(&lc.snapshot(&MinimalCoords::from_vector(&v), Some(&s.pose)).unwrap());
            let (p, m) = (at(s.u.to_vector() + e), at(s.u.to_vector() - e));
            p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * FD_STEP)).collect()
        })
        .collect()
}

fn c3_jacobians() -> Check {
    let lc = closure();
    let offset = DynParams::default().payload_point();
    let (mut e_ik, mut e_a, mut e_w) = (0.0f64, 0.0f64, 0.0f64);
    for u in grid() {
        let s = lc.snapshot(&u, None).map_err(|e| e.to_string())?;
        let jik = s.j_ik.matrix;
        let fd = fd_columns(&lc, &s, |x| x.joints.to_vector().as_slice().to_vec());
        let err = (0..2).flat_map(|j| (0..12).map(move |i| (i, j))).map(|(i, j)| (jik[(i, j)] - fd[j][i]).abs());
        e_ik = e_ik.max(rel(err.fold(0.0, f64::max), jik.amax()));

        let ja = s.actuation_jacobian().map_err(|e| e.to_string())?;
        let fd = fd_columns(&lc, &s, |x| x.joints.actuated().as_slice().to_vec());
        let err = (0..2).flat_map(|j| (0..3).map(move |i| (i, j))).map(|(i, j)| (ja[(i, j)] - fd[j][i]).abs());
        e_a = e_a.max(rel(err.fold(0.0, f64::max), ja.amax()));

        let jw = s.wrench_jacobian(&offset);
        let r0 = s.coupler_transform().rotation;
        for j in 0..2 {
            let e = if j == 0 { Vector2::x() } else { Vector2::y() } * FD_STEP;
            let t = |v: Vector2<f64>| {
                lc.snapshot(&MinimalCoords::from_vector(&v), Some(&s.pose)).unwrap().coupler_transform()
            };
            let (tp, tm) = (t(u.to_vector() + e), t(u.to_vector() - e));
            let dp = (tp.transform_point(&offset) - tm.transform_point(&offset)) / (2.0 * FD_STEP);
            let omega = vee_skew(&((tp.rotation - tm.rotation) / (2.0 * FD_STEP) * r0.transpose()));
            let col = jw.column(j);
            let err = (dp - col.fixed_rows::<3>(0)).amax() / col.fixed_rows::<3>(0).amax().max(1e-300);
            let err_w = (omega - col.fixed_rows::<3>(3)).amax() / col.fixed_rows::<3>(3).amax().max(1e-300);
            e_w = e_w.max(err).max(err_w);
        }
    }
    ensure(
        e_ik < 1e-5 && e_a < 1e-5 && e_w < 1e-5,
        format!("relative FD error J_IK {e_ik:.2e}, J_a {e_a:.2e}, J_w {e_w:.2e} on 10×10 grid"),
    )
}

fn c4_kernel() -> Check {
    let lc = closure();
    let mut worst = 0.0f64;
    for u in grid() {
        let s = lc.snapshot(&u, None).map_err(|e| e.to_string())?;
        let n = s.nullspace_base().map_err(|e| e.to_string())?;
        worst = worst.max((s.actuation_jacobian().unwrap().transpose() * n).norm());
    }
    let mut plant = Plant::new(MechanismGeometry::default(), DynParams::default(), springs()).map_err(|e| e.to_string())?;
    let theta = lc.snapshot(&MinimalCoords::new(0.3, -0.2), None).unwrap().joints.actuated();
    let load = DynParams::default().load_wrench(1.5);
    let mut shift = 0.0f64;
    for wrench in [Wrench::zeros(), load] {
        let u0 = plant
            .static_equilibrium(&theta, &Vector3::zeros(), &wrench, &MinimalCoords::CENTER)
            .map_err(|e| e.to_string())?;
        let n = plant.snapshot(&u0).unwrap().nullspace_base().unwrap();
        for lambda in [-500.0, 500.0] {
            let u = plant
                .static_equilibrium(&theta, &(n * lambda), &wrench, &u0)
                .map_err(|e| e.to_string())?;
            shift = shift.max((u.to_vector() - u0.to_vector()).amax());
        }
    }
    ensure(
        worst < 1e-10 && shift < 1e-8,
        format!("max ‖J_aᵀN‖ {worst:.2e}, equilibrium shift for λ = ±500 N·mm {shift:.2e} rad"),
    )
}

fn c5_spring() -> Check {
    let p = SpringParams { k: 4.0, delta0: 0.32, ..SpringParams::default() };
    let tau0 = spring_torque(0.0, &p).unwrap();
    let sigma0 = spring_stiffness(0.0, &p).unwrap();
    let mut worst = 0.0f64;
    for k in -40..=40 {
        let d = k as f64 * 0.05;
        let h = 1e-6;
        let fd = (spring_torque(d + h, &p).unwrap() - spring_torque(d - h, &p).unwrap()) / (2.0 * h);
        let s = spring_stiffness(d, &p).unwrap();
        worst = worst.max(((fd + s) / s).abs());
    }
    ensure(
        tau0 == 0.0 && (sigma0 - 25.0).abs() < 1e-12 && worst < 1e-6,
        format!("τ(0) = {tau0}, σ(0) = {sigma0} N·mm/rad, FD relative error {worst:.2e}"),
    )
}

fn c6_stiffness() -> Check {
    let lc = closure();
    let s = springs();
    let preloads = [0.0, 150.0, 300.0, 600.0, 900.0];
    let (mut asym, mut min_eig, mut iso) = (0.0f64, f64::INFINITY, 0.0f64);
    for u in grid() {
        let snap = lc.snapshot(&u, None).map_err(|e| e.to_string())?;
        let n = snap.nullspace_base().unwrap();
        let mut last_trace = f64::NEG_INFINITY;
        for &mag in &preloads {
            let mut traces = Vec::new();
            for lambda in [mag, -mag] {
                let sc = coupler_stiffness(&snap, &equilibrium_deflections(lambda, &n, &s), &s)
                    .map_err(|e| e.to_string())?;
                let m = sc.matrix;
                asym = asym.max((m[(0, 1)] - m[(1, 0)]).abs());
                min_eig = min_eig.min(sc.eigenvalues()[0]);
                if u.alpha_y == 0.0 && u.alpha_z == 0.0 {
                    let [lo, hi] = sc.eigenvalues();
                    iso = iso.max(hi / lo - 1.0);
                }
                traces.push(sc.trace());
            }
            if traces[0].min(traces[1]) <= last_trace {
                return Err(format!("trace not increasing in |λ| at {u:?}, |λ| = {mag}"));
            }
            last_trace = traces[0].max(traces[1]);
        }
    }
    let centre = lc.snapshot(&MinimalCoords::CENTER, None).unwrap();
    let n = centre.nullspace_base().unwrap();
    for lambda in [0.0, 300.0, -700.0] {
        let [lo, hi] = coupler_stiffness(&centre, &equilibrium_deflections(lambda, &n, &s), &s).unwrap().eigenvalues();
        iso = iso.max(hi / lo - 1.0);
    }
    ensure(
        asym < 1e-9 && min_eig > 0.0 && iso < 1e-6,
        format!("asymmetry {asym:.2e}, smallest eigenvalue {min_eig:.3} N·mm/rad, centre anisotropy {iso:.2e}"),
    )
}

fn c7_energy() -> Check {
    let start = Instant::now();
    let mut params = DynParams::default();
    params.damping = [0.0; 12];
    let mut plant = Plant::new(MechanismGeometry::default(), params, springs()).map_err(|e| e.to_string())?;
    let theta = plant.snapshot(&MinimalCoords::CENTER).unwrap().joints.actuated();
    let mut s = SimState::at_rest(MinimalCoords::new(0.3, -0.2), theta);
    s.u_dot = [1.0, 0.5];
    let e0 = plant.energy(&s).unwrap().total();
    let mut drift = 0.0f64;
    for _ in 0..50_000 {
        s = plant.step(&s, &PlantInputs::hold(&s), 1e-4).map_err(|e| e.to_string())?;
        drift = drift.max(((plant.energy(&s).unwrap().total() - e0) / e0).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(
        drift < 1e-6 && elapsed < 60.0,
        format!("relative energy drift {drift:.2e} over 5 s, {elapsed:.1} s"),
    )
}

fn c8_dae() -> Check {
    let geometry = MechanismGeometry::default();
    let params = DynParams::default();
    let lc = closure();
    let s = springs();
    let dt = 1e-4;
    let mut details = Vec::new();
    let mut worst = 0.0f64;

    let snap = |a: f64, b: f64| lc.snapshot(&MinimalCoords::new(a, b), None).unwrap();
    let preloaded = |sn: &Snapshot, lambda: f64| {
        motor_references(&sn.joints.actuated(), lambda, &sn.nullspace_base().unwrap(), &s)
    };
    let free = snap(0.4, -0.3);
    let hold = snap(0.2, 0.1);
    let target = snap(0.2, -0.2);
    let scenarios: [(&str, Snapshot, Vector3<f64>, Vector3<f64>, Wrench); 3] = [
        ("free fall", free.clone(), snap(0.0, 0.0).joints.actuated(), snap(0.0, 0.0).joints.actuated(), Wrench::zeros()),
        ("preload hold", hold.clone(), preloaded(&hold, 500.0), preloaded(&hold, 500.0), Wrench::zeros()),
        (
            "loaded step",
            snap(0.0, 0.0),
            snap(0.0, 0.0).joints.actuated(),
            preloaded(&target, 200.0),
            params.load_wrench(1.5),
        ),
    ];
    for (name, start, theta0, command, wrench) in scenarios {
        let mut plant = Plant::new(geometry, params.clone(), s).map_err(|e| e.to_string())?;
        let oracle = DaeOracle::new(geometry, params.clone(), s).map_err(|e| e.to_string())?;
        let mut a = SimState::at_rest(start.u, theta0);
        let mut b = oracle.initial_state(&start, &Vector2::zeros(), &theta0);
        let inputs = PlantInputs { motor_command: command, ps_command: 0.0, wrench };
        let mut err = 0.0f64;
        let mut travel = 0.0f64;
        for _ in 0..10_000 {
            a = plant.step(&a, &inputs, dt).map_err(|e| format!("{name}: {e}"))?;
            b = oracle.step(&b, &inputs, dt).map_err(|e| format!("{name}: {e}"))?;
            let ub = oracle.coupler_u(&b.q).map_err(|e| e.to_string())?;
            err = err.max((a.u.to_vector() - ub.to_vector()).amax());
            travel = travel.max((a.u.to_vector() - start.u.to_vector()).amax());
        }
        worst = worst.max(err);
        details.push(format!("{name} {err:.1e} (travel {travel:.2} rad)"));
    }
    ensure(worst < 1e-6, format!("max |u − u_DAE| over 1 s: {}", details.join(", ")))
}

fn c9_experiment(out: &Path) -> Check {
    let start = Instant::now();
    let result = paper_experiment(&ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    result.write(out).map_err(|e| e.to_string())?;
    let s = &result.summary;
    let detail = format!(
        "LS rms error {:.4} rad / torque {:.4} N·m, HS {:.4} rad / {:.4} N·m, error ratio {:.2}, {elapsed:.1} s",
        s.ls.rms.rms_error, s.ls.rms.rms_torque, s.hs.rms.rms_error, s.hs.rms.rms_torque, s.error_ratio
    );
    ensure(
        s.ls.halt.is_none()
            && s.hs.halt.is_none()
            && s.hs.rms.rms_error * 5.0 <= s.ls.rms.rms_error
            && s.hs.rms.rms_torque > s.ls.rms.rms_torque
            && elapsed < 120.0,
        detail,
    )
}

fn c10_flow() -> Check {
    let lc = closure();
    let s = springs();
    let lm = LMParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut converged, mut steps, mut increases) = (0, 0usize, 0usize);
    let mut worst_increase = 0.0f64;
    for _ in 0..100 {
        let u = MinimalCoords::new(rng.random_range(-U_MAX..=U_MAX), rng.random_range(-U_MAX..=U_MAX));
        let hidden = rng.random_range(20.0..=950.0);
        let snap = lc.snapshot(&u, None).map_err(|e| e.to_string())?;
        let c_ref: Matrix2<f64> = preload_compliance(&snap, hidden, &s).map_err(|e| e.to_string())?;
        let mut lambda = lm.lambda_init;
        let mut g = compliance_objective(lambda, &snap, &c_ref, &s).unwrap();
        let mut reached = g < 1e-6;
        for _ in 0..2000 {
            lambda = lambda_flow_step(lambda, &snap, &c_ref, &lm, &s, 1e-3).map_err(|e| e.to_string())?;
            let next = compliance_objective(lambda, &snap, &c_ref, &s).unwrap();
            steps += 1;
            if next > g {
                increases += 1;
                worst_increase = worst_increase.max(next - g);
            }
            g = next;
            reached |= g < 1e-6;
        }
        converged += reached as usize;
    }
    let monotone = 1.0 - increases as f64 / steps as f64;
    ensure(
        converged >= 95 && monotone >= 0.99,
        format!(
            "{converged}/100 reached G < 1e-6 within 2 s, non-increasing in {:.3}% of steps (largest rise {worst_increase:.1e})",
            100.0 * monotone
        ),
    )
}

fn c11_determinism(reference: &Path, scratch: &Path) -> Check {
    let files = ["ls.csv", "hs.csv", "sweep.csv", "summary.json"];
    for run in ["a", "b"] {
        let out = scratch.join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_vswrist"))
            .args(["paper-experiment", "--quiet", "--out"])
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("paper-experiment exited with {status}"));
        }
        for f in files {
            let got = std::fs::read(out.join(f)).map_err(|e| e.to_string())?;
            let want = std::fs::read(reference.join(f)).map_err(|e| e.to_string())?;
            if got != want {
                return Err(format!("{f} differs between runs"));
            }
        }
    }
    Ok(format!("two CLI reruns byte-identical to the library run ({})", files.join(", ")))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temporary directory");
    let reference = dir.path().join("reference");
    let criteria: Vec<(&str, Box<dyn Fn() -> Check + '_>)> = vec![
        ("kinematics roundtrip", Box::new(c1_roundtrip)),
        ("structural IK identities", Box::new(c2_structural_identities)),
        ("Jacobian gates", Box::new(c3_jacobians)),
        ("kernel gate", Box::new(c4_kernel)),
        ("spring law", Box::new(c5_spring)),
        ("stiffness matrix", Box::new(c6_stiffness)),
        ("energy conservation", Box::new(c7_energy)),
        ("reduced vs DAE oracle", Box::new(c8_dae)),
        ("LS/HS loaded experiment", Box::new(|| c9_experiment(&reference))),
        ("stiffness flow", Box::new(c10_flow)),
        ("determinism", Box::new(|| c11_determinism(&reference, dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
