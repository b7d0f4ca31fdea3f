use nalgebra::{DVector, Matrix6, Vector6};

use super::{rotation_log, ArmModel, CartesianPose, ChainFrames, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkOptions {
    pub max_iterations: usize,
    /// Position residual accepted as converged (m).
    pub position_tolerance: f64,
    /// Orientation residual accepted as converged (rad).
    pub orientation_tolerance: f64,
    pub damping: f64,
    /// Largest joint change per iteration (rad).
    pub max_step: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            position_tolerance: 1e-3,
            orientation_tolerance: 1e-2,
            damping: 0.02,
            max_step: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub position_residual: f64,
    pub orientation_residual: f64,
}

/// Pose error `[p_target - p; log(R_target R^T)]`, i.e. the twist that moves
/// the current pose toward the target.
pub fn pose_error(current: &CartesianPose, target: &CartesianPose) -> Vector6<f64> {
    let dp = target.position - current.position;
    let dr = rotation_log(&(target.rotation * current.rotation.transpose()));
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

/// Damped least-squares inverse kinematics seeded at `seed`; iterates stay
/// inside the joint limits.
pub fn inverse_kinematics(
    model: &ArmModel,
    target: &CartesianPose,
    seed: &DVector<f64>,
    opts: &IkOptions,
) -> Result<IkSolution> {
    let lower = model.lower_limits();
    let upper = model.upper_limits();
    let mut q = seed.clone();
    let mut iterations = 0;
    loop {
        let chain = ChainFrames::compute(model, &q)?;
        let err = pose_error(&chain.tool_pose(), target);
        let pos = err.fixed_rows::<3>(0).norm();
        let rot = err.fixed_rows::<3>(3).norm();
        let converged = pos <= opts.position_tolerance && rot <= opts.orientation_tolerance;
        if converged || iterations >= opts.max_iterations {
            return Ok(IkSolution {
                q,
                converged,
                iterations,
                position_residual: pos,
                orientation_residual: rot,
            });
        }
        let j = chain.jacobian();
        let jjt: Matrix6<f64> =
            &j * j.transpose() + Matrix6::identity() * opts.damping * opts.damping;
        let Some(chol) = jjt.cholesky() else {
            return Ok(IkSolution {
                q,
                converged: false,
                iterations,
                position_residual: pos,
                orientation_residual: rot,
            });
        };
        let mut dq = j.transpose() * chol.solve(&err);
        let largest = dq.amax();
        if largest > opts.max_step {
            dq *= opts.max_step / largest;
        }
        q += dq;
        for i in 0..q.len() {
            q[i] = q[i].clamp(lower[i], upper[i]);
        }
        iterations += 1;
    }
}
