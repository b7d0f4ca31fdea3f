use nalgebra::{DVector, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::{ControlError, ControlGains, Result};
use crate::dynamics::{crba, jdot_qdot_from, rnea};
use crate::dynamics::{
    rotation_log, task_space_mass_damped, ArmModel, CartesianPose, ChainFrames, JointState,
};
use crate::geometry::PathFrame;

/// Desired tool pose with its first two time derivatives and the path frame
/// that orients the stiffness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionTarget {
    pub pose: CartesianPose,
    /// Linear then angular velocity.
    pub twist: Vector6<f64>,
    pub accel: Vector6<f64>,
    pub frame: PathFrame,
}

impl MotionTarget {
    pub fn at_rest(pose: CartesianPose, frame: PathFrame) -> Self {
        Self {
            pose,
            twist: Vector6::zeros(),
            accel: Vector6::zeros(),
            frame,
        }
    }
}

/// `[p - p_d; log(R R_d^T)]`.
pub fn cartesian_error(current: &CartesianPose, target: &CartesianPose) -> Vector6<f64> {
    let dp = current.position - target.position;
    let dr = rotation_log(&(current.rotation * target.rotation.transpose()));
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceTerm {
    pub tau: DVector<f64>,
    /// Commanded task wrench `F_d`.
    pub wrench: Vector6<f64>,
    pub error: Vector6<f64>,
    pub error_rate: Vector6<f64>,
    pub task_mass: Matrix6<f64>,
}

/// `tau = J^T F_d + C qd + g` with
/// `F_d = M_x xdd_d - D e' - K e - M_x J' qd`, plus joint damping projected
/// into the task null space.
pub fn impedance_torque(
    model: &ArmModel,
    state: &JointState,
    target: &MotionTarget,
    gains: &ControlGains,
) -> Result<ImpedanceTerm> {
    model.check_dim(&state.qd, "qd")?;
    let chain = ChainFrames::compute(model, &state.q)?;
    let jac = chain.jacobian();
    let mass = crba(model, &chain);
    let mx = task_space_mass_damped(&mass, &jac)?;

    let error = cartesian_error(&chain.tool_pose(), &target.pose);
    let twist: Vector6<f64> = &jac * &state.qd;
    let error_rate = twist - target.twist;
    let axes = target.frame.axes();
    let k = gains.stiffness_matrix(&axes);
    let d = gains.damping_matrix(&axes);
    let bias = jdot_qdot_from(&chain, &state.qd);
    let wrench = mx * target.accel - d * error_rate - k * error - mx * bias;

    let coriolis_gravity = rnea(model, &chain, &state.qd, &DVector::zeros(model.dof()), true);
    let mut tau = jac.transpose() * wrench + coriolis_gravity;

    if gains.null_damping > 0.0 {
        // N^T = I - J^T M_x J M^-1
        let chol = mass.clone().cholesky().ok_or_else(|| {
            ControlError::InvalidInput("mass matrix is not positive definite".into())
        })?;
        let damping: DVector<f64> = -&state.qd * gains.null_damping;
        let minv_tau = chol.solve(&damping);
        let projected = &damping - jac.transpose() * (mx * (&jac * minv_tau));
        tau += projected;
    }
    if !tau.iter().all(|v| v.is_finite()) {
        return Err(ControlError::InvalidInput(
            "impedance torque is not finite".into(),
        ));
    }
    Ok(ImpedanceTerm {
        tau,
        wrench,
        error,
        error_rate,
        task_mass: mx,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceTerm {
    pub tau: DVector<f64>,
    /// Pure force along the surface normal (zero moment).
    pub wrench: Vector6<f64>,
    /// Measured force along the normal, `f . n`.
    pub measured_normal: f64,
}

/// Scalar normal-force law `u = -k_p (f.n - f_n) - k_d d/dt(f.n)`, applied as
/// the force `u (-n)` pressing into the surface.
pub fn force_torque(
    model: &ArmModel,
    state: &JointState,
    measured_wrench: &Vector6<f64>,
    measured_rate: &Vector6<f64>,
    frame: &PathFrame,
    gains: &ControlGains,
) -> Result<ForceTerm> {
    let chain = ChainFrames::compute(model, &state.q)?;
    let n = frame.n;
    let force = Vector3::new(measured_wrench[0], measured_wrench[1], measured_wrench[2]);
    let rate = Vector3::new(measured_rate[0], measured_rate[1], measured_rate[2]);
    let measured_normal = force.dot(&n);
    let u = -gains.k_p * (measured_normal - gains.f_n) - gains.k_d * rate.dot(&n);
    let push = -n * u;
    let wrench = Vector6::new(push.x, push.y, push.z, 0.0, 0.0, 0.0);
    let tau = chain.jacobian().transpose() * wrench;
    Ok(ForceTerm {
        tau,
        wrench,
        measured_normal,
    })
}

/// Summed command with per-joint saturation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlOutput {
    pub tau: DVector<f64>,
    /// Sum before saturation.
    pub tau_unsaturated: DVector<f64>,
    pub saturated: bool,
    pub error: Vector6<f64>,
    pub measured_normal: f64,
    pub impedance_wrench: Vector6<f64>,
    pub force_wrench: Vector6<f64>,
}

/// `tau = tau_imp + tau_n`, clamped elementwise to `+-limits`. A missing force
/// term contributes nothing.
pub fn hybrid_torque(
    impedance: &ImpedanceTerm,
    force: Option<&ForceTerm>,
    limits: &[f64],
) -> Result<ControlOutput> {
    let n = impedance.tau.len();
    if limits.len() != n {
        return Err(ControlError::InvalidInput(format!(
            "{} torque limits for {n} joints",
            limits.len()
        )));
    }
    let mut sum = impedance.tau.clone();
    if let Some(f) = force {
        if f.tau.len() != n {
            return Err(ControlError::InvalidInput(
                "force and impedance torques differ in length".into(),
            ));
        }
        sum += &f.tau;
    }
    let mut saturated = false;
    let tau = DVector::from_iterator(
        n,
        sum.iter().zip(limits).map(|(&t, &lim)| {
            if t.is_nan() {
                saturated = true;
                return 0.0;
            }
            if t.abs() > lim {
                saturated = true;
            }
            t.clamp(-lim, lim)
        }),
    );
    Ok(ControlOutput {
        tau,
        tau_unsaturated: sum,
        saturated,
        error: impedance.error,
        measured_normal: force.map_or(0.0, |f| f.measured_normal),
        impedance_wrench: impedance.wrench,
        force_wrench: force.map_or(Vector6::zeros(), |f| f.wrench),
    })
}
