use nalgebra::{
    DVector, Isometry3, Matrix3, Matrix6xX, Rotation3, Translation3, Unit, UnitQuaternion, Vector3,
    Vector6,
};
use serde::{Deserialize, Serialize};

use super::{ArmModel, Result};

/// End-effector position and orientation in the base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianPose {
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl CartesianPose {
    pub fn new(position: Vector3<f64>, rotation: Matrix3<f64>) -> Self {
        Self { position, rotation }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        Isometry3::from_parts(
            Translation3::from(self.position),
            UnitQuaternion::from_rotation_matrix(&rot),
        )
    }
}

/// Pose plus twist (linear then angular velocity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianState {
    pub pose: CartesianPose,
    pub twist: Vector6<f64>,
}

/// World-frame quantities of every joint at one configuration.
#[derive(Debug, Clone)]
pub struct ChainFrames {
    /// Joint frame after its own rotation.
    pub frames: Vec<Isometry3<f64>>,
    pub origins: Vec<Vector3<f64>>,
    pub axes: Vec<Vector3<f64>>,
    /// Link centers of mass.
    pub coms: Vec<Vector3<f64>>,
    /// Link inertias about their centers of mass, base axes.
    pub inertias: Vec<Matrix3<f64>>,
    pub tool: Isometry3<f64>,
}

impl ChainFrames {
    pub fn compute(model: &ArmModel, q: &DVector<f64>) -> Result<Self> {
        model.check_dim(q, "q")?;
        let n = model.dof();
        let mut frames = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);
        let mut axes = Vec::with_capacity(n);
        let mut coms = Vec::with_capacity(n);
        let mut inertias = Vec::with_capacity(n);
        let mut current = Isometry3::identity();
        for (i, (joint, link)) in model.joints.iter().zip(&model.links).enumerate() {
            let pre = current * joint.parent;
            let spin = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(joint.axis), q[i]);
            current = pre * Isometry3::from_parts(Translation3::identity(), spin);
            let r = current.rotation.to_rotation_matrix().into_inner();
            origins.push(current.translation.vector);
            axes.push(r * joint.axis);
            coms.push(current.transform_point(&link.com.into()).coords);
            inertias.push(r * link.inertia * r.transpose());
            frames.push(current);
        }
        let tool = current * model.tool;
        Ok(Self {
            frames,
            origins,
            axes,
            coms,
            inertias,
            tool,
        })
    }

    pub fn tool_pose(&self) -> CartesianPose {
        CartesianPose {
            position: self.tool.translation.vector,
            rotation: self.tool.rotation.to_rotation_matrix().into_inner(),
        }
    }

    /// Geometric Jacobian of the tool frame origin: linear rows then angular.
    pub fn jacobian(&self) -> Matrix6xX<f64> {
        let n = self.axes.len();
        let p = self.tool.translation.vector;
        let mut j = Matrix6xX::zeros(n);
        for i in 0..n {
            let z = self.axes[i];
            let lin = z.cross(&(p - self.origins[i]));
            j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            j.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
        }
        j
    }
}

/// Tool pose in the base frame.
pub fn forward_kinematics(model: &ArmModel, q: &DVector<f64>) -> Result<CartesianPose> {
    Ok(ChainFrames::compute(model, q)?.tool_pose())
}

/// Geometric Jacobian (6 x n) in the base frame.
pub fn jacobian(model: &ArmModel, q: &DVector<f64>) -> Result<Matrix6xX<f64>> {
    Ok(ChainFrames::compute(model, q)?.jacobian())
}

/// Velocity-product acceleration of the tool, `J'(q, qd) qd`: the tool's
/// linear and angular acceleration when the joints do not accelerate.
pub fn jdot_qdot(model: &ArmModel, q: &DVector<f64>, qd: &DVector<f64>) -> Result<Vector6<f64>> {
    model.check_dim(qd, "qd")?;
    let chain = ChainFrames::compute(model, q)?;
    Ok(jdot_qdot_from(&chain, qd))
}

pub(crate) fn jdot_qdot_from(chain: &ChainFrames, qd: &DVector<f64>) -> Vector6<f64> {
    let n = chain.axes.len();
    let mut omega = Vector3::zeros();
    let mut alpha = Vector3::zeros();
    let mut acc = Vector3::zeros();
    let mut prev = chain.origins[0];
    for i in 0..n {
        let r = chain.origins[i] - prev;
        acc += alpha.cross(&r) + omega.cross(&omega.cross(&r));
        let spin = chain.axes[i] * qd[i];
        alpha += omega.cross(&spin);
        omega += spin;
        prev = chain.origins[i];
    }
    let r = chain.tool.translation.vector - prev;
    acc += alpha.cross(&r) + omega.cross(&omega.cross(&r));
    Vector6::new(acc.x, acc.y, acc.z, alpha.x, alpha.y, alpha.z)
}

/// Rotation vector (axis * angle) of a rotation matrix.
/// Goes through a unit quaternion, which stays finite when rounding pushes
/// the trace past 3.
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r)).scaled_axis()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn log_stays_finite_near_identity_and_half_turn() {
        // Rounding can push the trace of a product of rotations above 3.
        let eps = Matrix3::new(
            1.0 + 1e-16,
            1e-17,
            0.0,
            -1e-17,
            1.0 + 1e-16,
            0.0,
            0.0,
            0.0,
            1.0 + 1e-16,
        );
        assert!(rotation_log(&eps).norm() < 1e-12);
        let half =
            Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI).into_inner();
        assert!((rotation_log(&half).norm() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn one_dof_quarter_turn() {
        let m = ArmModel::pendulum(1.0, 1.0, Vector3::z(), Vector3::zeros());
        let p = forward_kinematics(&m, &DVector::from_element(1, FRAC_PI_2)).unwrap();
        assert!((p.position - Vector3::y()).norm() < 1e-15);
        let j = jacobian(&m, &DVector::zeros(1)).unwrap();
        assert_eq!(
            j.column(0).into_owned(),
            Vector6::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0)
        );
    }

    #[test]
    fn one_dof_centripetal() {
        let m = ArmModel::pendulum(1.0, 1.0, Vector3::z(), Vector3::zeros());
        let a = jdot_qdot(&m, &DVector::zeros(1), &DVector::from_element(1, 1.0)).unwrap();
        assert!((a - Vector6::new(-1.0, 0.0, 0.0, 0.0, 0.0, 0.0)).norm() < 1e-15);
        let z = jdot_qdot(&m, &DVector::from_element(1, 0.3), &DVector::zeros(1)).unwrap();
        assert_eq!(z, Vector6::zeros());
    }

    #[test]
    fn zero_pose_is_composition_of_fixed_transforms() {
        let m = ArmModel::seven_dof(0.1);
        let pose = forward_kinematics(&m, &DVector::zeros(7)).unwrap();
        let expected = m
            .joints
            .iter()
            .fold(Isometry3::identity(), |acc, j| acc * j.parent)
            * m.tool;
        assert!((pose.position - expected.translation.vector).norm() < 1e-15);
        assert!((pose.position.z - (0.34 + 0.8 + 0.126 + 0.1)).abs() < 1e-12);
        assert!((pose.rotation - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = ArmModel::seven_dof(0.0);
        assert!(forward_kinematics(&m, &DVector::zeros(6)).is_err());
        assert!(jdot_qdot(&m, &DVector::zeros(7), &DVector::zeros(3)).is_err());
    }
}
