use nalgebra::{Matrix3, Matrix3x2, Matrix6x2, SMatrix, SVector, Vector2, Vector3, Vector4};
use num_dual::{Dual2_64, Dual64};

use super::leg::{leg_fk_generic, leg_ik_generic};
use super::{
    kernel_direction, IKJacobian, LegGeometry, LegJointAngles, MechanismGeometry, MinimalCoords,
    StackedJointAngles, NUM_LEGS,
};
use crate::error::{Result, WristError};
use crate::spatial::{pose_to_transform, rot_x, vee_skew, HomogeneousTransform, PoseVector};
use crate::Real;

pub const CLOSURE_MAX_ITERATIONS: usize = 50;
const CLOSURE_TOLERANCE: f64 = 1e-10;
const RESIDUALS: usize = 6 * NUM_LEGS;

type Residual<T> = SVector<T, RESIDUALS>;

/// Loop-closure mismatch for the free pose components `z = (α_x, x_c, y_c, z_c)`
/// at prescribed `u = (α_y, α_z)`.
///
/// For every leg the coupler position is pushed through that leg's IK and
/// back through its FK; the block is the position mismatch (mm) followed by
/// the orientation mismatch `vee(skew(Rᵀ R_leg))` scaled by `rot_scale`.
pub fn closure_residual<T: Real>(
    z: &[T; 4],
    u: &[T; 2],
    legs: &[LegGeometry; NUM_LEGS],
    rot_scale: f64,
) -> Result<Residual<T>> {
    let pose = PoseVector::new(z[0], u[0], u[1], z[1], z[2], z[3]);
    let target = pose_to_transform(&pose);
    let scale: T = crate::lit(rot_scale);
    let mut r = Residual::<T>::zeros();
    for (i, leg) in legs.iter().enumerate() {
        let q = leg_ik_generic(&target.translation, leg, true)?;
        let reached = leg_fk_generic(&q, leg);
        let dp = reached.translation - target.translation;
        let dr = vee_skew(&(target.rotation.transpose() * reached.rotation)) * scale;
        r.fixed_rows_mut::<3>(6 * i).copy_from(&dp);
        r.fixed_rows_mut::<3>(6 * i + 3).copy_from(&dr);
    }
    Ok(r)
}

/// Solver for the pose map `x = f(u)` and its derivatives.
#[derive(Debug, Clone)]
pub struct LoopClosure {
    geometry: MechanismGeometry,
    legs: [LegGeometry; NUM_LEGS],
    rot_scale: f64,
}

impl LoopClosure {
    pub fn new(geometry: MechanismGeometry) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            geometry,
            legs: geometry.legs(),
            rot_scale: geometry.d,
        })
    }

    pub fn geometry(&self) -> &MechanismGeometry {
        &self.geometry
    }

    pub fn legs(&self) -> &[LegGeometry; NUM_LEGS] {
        &self.legs
    }

    fn residual_f64(&self, z: &Vector4<f64>, u: &MinimalCoords) -> Result<Residual<f64>> {
        closure_residual(&[z[0], z[1], z[2], z[3]], &[u.alpha_y, u.alpha_z], &self.legs, self.rot_scale)
    }

    /// Residual partials `∂F/∂z` (18×4) and `∂F/∂u` (18×2) by forward-mode AD.
    fn residual_partials(
        &self,
        z: &Vector4<f64>,
        u: &MinimalCoords,
    ) -> Result<(Residual<f64>, SMatrix<f64, RESIDUALS, 4>, SMatrix<f64, RESIDUALS, 2>)> {
        let uu = [u.alpha_y, u.alpha_z];
        let mut fz = SMatrix::<f64, RESIDUALS, 4>::zeros();
        let mut fu = SMatrix::<f64, RESIDUALS, 2>::zeros();
        let mut value = Residual::<f64>::zeros();
        for k in 0..6 {
            let zd: [Dual64; 4] =
                std::array::from_fn(|i| Dual64::new(z[i], if i == k { 1.0 } else { 0.0 }));
            let ud: [Dual64; 2] =
                std::array::from_fn(|i| Dual64::new(uu[i], if i + 4 == k { 1.0 } else { 0.0 }));
            let r = closure_residual(&zd, &ud, &self.legs, self.rot_scale)?;
            if k == 0 {
                value = r.map(|v| v.re);
            }
            let col = r.map(|v| v.eps);
            if k < 4 {
                fz.set_column(k, &col);
            } else {
                fu.set_column(k - 4, &col);
            }
        }
        Ok((value, fz, fu))
    }

    /// Solves `x = f(u)` by Gauss-Newton, starting from `seed` or the central pose.
    ///
    /// If the direct solve fails, the posture is approached from the centre in
    /// small steps, each seeded by the previous solution.
    pub fn coupler_pose(&self, u: &MinimalCoords, seed: Option<&PoseVector>) -> Result<PoseVector> {
        self.geometry.check_workspace(u)?;
        let direct = self.solve_from(u, seed.copied().unwrap_or_else(|| self.geometry.central_pose()));
        if direct.is_ok() {
            return direct;
        }
        let steps = 16;
        let mut pose = self.geometry.central_pose();
        for k in 1..=steps {
            let s = k as f64 / steps as f64;
            let uk = MinimalCoords::new(u.alpha_y * s, u.alpha_z * s);
            pose = self.solve_from(&uk, pose)?;
        }
        Ok(pose)
    }

    fn solve_from(&self, u: &MinimalCoords, start: PoseVector) -> Result<PoseVector> {
        let mut z = Vector4::new(start.alpha_x, start.x_c, start.y_c, start.z_c);
        if !z.iter().all(|v| v.is_finite()) {
            return Err(WristError::InvalidArgument("non-finite loop-closure seed".into()));
        }
        let mut polishing = false;
        let mut iterations = 0;
        while iterations < CLOSURE_MAX_ITERATIONS {
            iterations += 1;
            let (r, fz, _) = self.residual_partials(&z, u)?;
            let step = gauss_newton_step(&fz, &r).ok_or_else(|| {
                WristError::Singularity("loop-closure Jacobian lost rank".into())
            })?;
            z -= step;
            if !z.iter().all(|v| v.is_finite()) {
                break;
            }
            if step.amax() < 1e-9 * (1.0 + z.amax()) {
                if polishing {
                    break;
                }
                polishing = true;
            }
        }
        let residual = self
            .residual_f64(&z, u)
            .map(|r| r.amax())
            .unwrap_or(f64::INFINITY);
        if !(residual <= CLOSURE_TOLERANCE) {
            return Err(WristError::LoopClosureFailure {
                iterations,
                residual,
            });
        }
        Ok(PoseVector::new(z[0], u.alpha_y, u.alpha_z, z[1], z[2], z[3]))
    }

    /// Pose, joint angles and first-order sensitivities at `u`.
    pub fn snapshot(&self, u: &MinimalCoords, seed: Option<&PoseVector>) -> Result<Snapshot> {
        let pose = self.coupler_pose(u, seed)?;
        let z = Vector4::new(pose.alpha_x, pose.x_c, pose.y_c, pose.z_c);
        let (_, fz, fu) = self.residual_partials(&z, u)?;
        let projector = pseudo_inverse(&fz).ok_or_else(|| {
            WristError::Singularity("loop-closure Jacobian lost rank".into())
        })?;
        let pose_jacobian = -(projector * fu);

        let p = pose.position();
        let mut joints = [LegJointAngles::new(0.0, 0.0, 0.0, 0.0); NUM_LEGS];
        for (i, leg) in self.legs.iter().enumerate() {
            joints[i] = LegJointAngles::from_array(leg_ik_generic(&p, leg, false)?);
        }

        let mut j_ik = SMatrix::<f64, 12, 2>::zeros();
        for j in 0..2 {
            let dp = pose_jacobian.fixed_view::<3, 1>(1, j).into_owned();
            let pd = Vector3::from_fn(|r, _| Dual64::new(p[r], dp[r]));
            for (i, leg) in self.legs.iter().enumerate() {
                let q = leg_ik_generic(&pd, leg, false)?;
                for k in 0..4 {
                    j_ik[(4 * i + k, j)] = q[k].eps;
                }
            }
        }

        Ok(Snapshot {
            u: *u,
            pose,
            joints: StackedJointAngles { legs: joints },
            pose_jacobian,
            j_ik: IKJacobian { matrix: j_ik },
            projector,
            legs: self.legs,
            rot_scale: self.rot_scale,
        })
    }
}

fn gauss_newton_step(
    fz: &SMatrix<f64, RESIDUALS, 4>,
    r: &Residual<f64>,
) -> Option<Vector4<f64>> {
    let normal = fz.transpose() * fz;
    normal.cholesky().map(|c| c.solve(&(fz.transpose() * r)))
}

fn pseudo_inverse(fz: &SMatrix<f64, RESIDUALS, 4>) -> Option<SMatrix<f64, 4, RESIDUALS>> {
    let normal = fz.transpose() * fz;
    normal.cholesky().map(|c| c.solve(&fz.transpose()))
}

/// Kinematic state at one posture, with the derivative machinery the
/// dynamics needs.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub u: MinimalCoords,
    pub pose: PoseVector,
    pub joints: StackedJointAngles,
    /// `∂(α_x, x_c, y_c, z_c)/∂u`.
    pub pose_jacobian: SMatrix<f64, 4, 2>,
    pub j_ik: IKJacobian,
    projector: SMatrix<f64, 4, RESIDUALS>,
    legs: [LegGeometry; NUM_LEGS],
    rot_scale: f64,
}

impl Snapshot {
    pub fn coupler_transform(&self) -> HomogeneousTransform {
        pose_to_transform(&self.pose)
    }

    /// `T_b^e = T_b^c · Rx(θ_PS)`.
    pub fn end_effector_pose(&self, theta_ps: f64) -> HomogeneousTransform {
        self.coupler_transform() * HomogeneousTransform::from_rotation(rot_x(theta_ps))
    }

    /// `J_a`: rows of `J_IK` belonging to each leg's first joint.
    pub fn actuation_jacobian(&self) -> Result<Matrix3x2<f64>> {
        let ja = self.j_ik.actuation();
        let sv = ja.singular_values();
        let (hi, lo) = (sv.max(), sv.min());
        if !(hi > 0.0) || lo < 1e-8 * hi {
            return Err(WristError::Singularity(format!(
                "actuation Jacobian rank < 2 (singular values {hi:.3e}, {lo:.3e})"
            )));
        }
        Ok(ja)
    }

    pub fn nullspace_base(&self) -> Result<Vector3<f64>> {
        kernel_direction(&self.actuation_jacobian()?)
    }

    /// Pose along the first-order path `u + ε·du`.
    pub fn pose_dual(&self, du: &Vector2<f64>) -> PoseVector<Dual64> {
        let dz = self.pose_jacobian * du;
        let x = &self.pose;
        PoseVector::new(
            Dual64::new(x.alpha_x, dz[0]),
            Dual64::new(x.alpha_y, du[0]),
            Dual64::new(x.alpha_z, du[1]),
            Dual64::new(x.x_c, dz[1]),
            Dual64::new(x.y_c, dz[2]),
            Dual64::new(x.z_c, dz[3]),
        )
    }

    /// Second derivative of the free pose components along `u + s·u̇`
    /// (with `ü = 0`).
    pub fn pose_curvature(&self, u_dot: &Vector2<f64>) -> Result<Vector4<f64>> {
        let x = &self.pose;
        let z = [x.alpha_x, x.x_c, x.y_c, x.z_c];
        let dz = self.pose_jacobian * u_dot;
        let zd: [Dual2_64; 4] = std::array::from_fn(|i| Dual2_64::new(z[i], dz[i], 0.0));
        let ud = [
            Dual2_64::new(x.alpha_y, u_dot[0], 0.0),
            Dual2_64::new(x.alpha_z, u_dot[1], 0.0),
        ];
        let r = closure_residual(&zd, &ud, &self.legs, self.rot_scale)?;
        Ok(-(self.projector * r.map(|v| v.v2)))
    }

    /// Pose along `u(s) = u + s·u̇` to second order (`ü = 0`).
    pub fn pose_path(&self, u_dot: &Vector2<f64>) -> Result<PoseVector<Dual2_64>> {
        let dz = self.pose_jacobian * u_dot;
        let ddz = self.pose_curvature(u_dot)?;
        let x = &self.pose;
        Ok(PoseVector::new(
            Dual2_64::new(x.alpha_x, dz[0], ddz[0]),
            Dual2_64::new(x.alpha_y, u_dot[0], 0.0),
            Dual2_64::new(x.alpha_z, u_dot[1], 0.0),
            Dual2_64::new(x.x_c, dz[1], ddz[1]),
            Dual2_64::new(x.y_c, dz[2], ddz[2]),
            Dual2_64::new(x.z_c, dz[3], ddz[3]),
        ))
    }

    /// Joint angles along a pose path (any scalar type).
    pub fn joints_along<T: Real>(&self, pose: &PoseVector<T>) -> Result<[[T; 4]; NUM_LEGS]> {
        let p = pose.position();
        let mut out = [[T::zero(); 4]; NUM_LEGS];
        for (i, leg) in self.legs.iter().enumerate() {
            out[i] = leg_ik_generic(&p, leg, false)?;
        }
        Ok(out)
    }

    /// Convective term `J̇_IK·u̇`: second derivative of `Q(u + s·u̇)`.
    pub fn convective(&self, u_dot: &Vector2<f64>) -> Result<SVector<f64, 12>> {
        let q = self.joints_along(&self.pose_path(u_dot)?)?;
        Ok(SVector::from_iterator(q.iter().flat_map(|l| l.iter().map(|v| v.v2))))
    }

    /// Geometric Jacobian of a point fixed in the coupler frame:
    /// rows 0..3 linear velocity (mm/rad), rows 3..6 angular velocity.
    pub fn wrench_jacobian(&self, offset: &Vector3<f64>) -> Matrix6x2<f64> {
        let mut jw = Matrix6x2::zeros();
        for j in 0..2 {
            let du = if j == 0 { Vector2::x() } else { Vector2::y() };
            let t = pose_to_transform(&self.pose_dual(&du));
            let point = t.transform_point(&offset.map(Dual64::from_re));
            let r: Matrix3<f64> = t.rotation.map(|v| v.re);
            let rd: Matrix3<f64> = t.rotation.map(|v| v.eps);
            let omega = vee_skew(&(rd * r.transpose()));
            for k in 0..3 {
                jw[(k, j)] = point[k].eps;
                jw[(k + 3, j)] = omega[k];
            }
        }
        jw
    }
}
