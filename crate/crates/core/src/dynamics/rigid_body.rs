use nalgebra::{
    Cholesky, DMatrix, DVector, Dyn, Matrix3, Matrix6, Matrix6xX, SymmetricEigen, Vector3, Vector6,
};

use super::{ArmModel, ChainFrames, DynamicsError, JointState, Result};

/// Smallest Jacobian singular value below which the plain task-space inertia
/// is refused.
pub const SINGULAR_THRESHOLD: f64 = 1e-6;
/// Below this smallest singular value the damped inverse is used.
pub const DAMPING_ONSET: f64 = 1e-3;
/// Damping factor of the damped task-space inverse.
pub const DAMPING_LAMBDA: f64 = 1e-3;
/// Largest accepted integration step.
pub const MAX_STEP: f64 = 5e-3;

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Recursive Newton-Euler inverse dynamics in base-frame coordinates.
/// With `with_gravity` the base accelerates upward at `-g`.
pub(crate) fn rnea(
    model: &ArmModel,
    chain: &ChainFrames,
    qd: &DVector<f64>,
    qdd: &DVector<f64>,
    with_gravity: bool,
) -> DVector<f64> {
    let n = model.dof();
    let mut omega = vec![Vector3::zeros(); n];
    let mut alpha = vec![Vector3::zeros(); n];
    let mut acc_com = vec![Vector3::zeros(); n];

    let (mut w, mut dw) = (Vector3::zeros(), Vector3::zeros());
    let mut acc = if with_gravity {
        -model.gravity
    } else {
        Vector3::zeros()
    };
    let mut prev = chain.origins[0];
    for i in 0..n {
        let r = chain.origins[i] - prev;
        acc += dw.cross(&r) + w.cross(&w.cross(&r));
        let z = chain.axes[i];
        dw += z * qdd[i] + w.cross(&(z * qd[i]));
        w += z * qd[i];
        let c = chain.coms[i] - chain.origins[i];
        omega[i] = w;
        alpha[i] = dw;
        acc_com[i] = acc + dw.cross(&c) + w.cross(&w.cross(&c));
        prev = chain.origins[i];
    }

    let mut tau = DVector::zeros(n);
    let mut f_next = Vector3::zeros();
    let mut n_next = Vector3::zeros();
    for i in (0..n).rev() {
        let link = &model.links[i];
        let inertia = chain.inertias[i];
        let force = acc_com[i] * link.mass;
        let moment = inertia * alpha[i] + omega[i].cross(&(inertia * omega[i]));
        let lever = chain.coms[i] - chain.origins[i];
        let to_next = if i + 1 < n {
            chain.origins[i + 1] - chain.origins[i]
        } else {
            Vector3::zeros()
        };
        let f = force + f_next;
        let m = moment + lever.cross(&force) + n_next + to_next.cross(&f_next);
        tau[i] = chain.axes[i].dot(&m);
        f_next = f;
        n_next = m;
    }
    tau
}

/// Composite-rigid-body joint-space inertia matrix.
pub(crate) fn crba(model: &ArmModel, chain: &ChainFrames) -> DMatrix<f64> {
    let n = model.dof();
    // Spatial inertia of each link about the base origin, [angular; linear] ordering.
    let spatial: Vec<Matrix6<f64>> = (0..n)
        .map(|i| {
            let m = model.links[i].mass;
            let c = skew(&chain.coms[i]);
            let mut s = Matrix6::zeros();
            s.fixed_view_mut::<3, 3>(0, 0)
                .copy_from(&(chain.inertias[i] + c * c.transpose() * m));
            s.fixed_view_mut::<3, 3>(0, 3).copy_from(&(c * m));
            s.fixed_view_mut::<3, 3>(3, 0)
                .copy_from(&(c.transpose() * m));
            s.fixed_view_mut::<3, 3>(3, 3)
                .copy_from(&(Matrix3::identity() * m));
            s
        })
        .collect();
    let motion: Vec<Vector6<f64>> = (0..n)
        .map(|i| {
            let z = chain.axes[i];
            let v = chain.origins[i].cross(&z);
            Vector6::new(z.x, z.y, z.z, v.x, v.y, v.z)
        })
        .collect();

    let mut composite = Matrix6::zeros();
    let mut mass = DMatrix::zeros(n, n);
    for i in (0..n).rev() {
        composite += spatial[i];
        let force = composite * motion[i];
        for j in 0..=i {
            let v = motion[j].dot(&force);
            mass[(i, j)] = v;
            mass[(j, i)] = v;
        }
    }
    mass
}

/// Joint-space inertia matrix `M(q)`.
pub fn mass_matrix(model: &ArmModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let chain = ChainFrames::compute(model, q)?;
    Ok(crba(model, &chain))
}

/// Velocity-product torques `C(q, qd) qd`.
pub fn coriolis_term(
    model: &ArmModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
) -> Result<DVector<f64>> {
    model.check_dim(qd, "qd")?;
    let chain = ChainFrames::compute(model, q)?;
    Ok(rnea(model, &chain, qd, &DVector::zeros(model.dof()), false))
}

/// Gravity torques `g(q)`.
pub fn gravity_term(model: &ArmModel, q: &DVector<f64>) -> Result<DVector<f64>> {
    let chain = ChainFrames::compute(model, q)?;
    let zero = DVector::zeros(model.dof());
    Ok(rnea(model, &chain, &zero, &zero, true))
}

/// Full inverse dynamics `M qdd + C qd + g`.
pub fn inverse_dynamics(
    model: &ArmModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    qdd: &DVector<f64>,
) -> Result<DVector<f64>> {
    model.check_dim(qd, "qd")?;
    model.check_dim(qdd, "qdd")?;
    let chain = ChainFrames::compute(model, q)?;
    Ok(rnea(model, &chain, qd, qdd, true))
}

/// Smallest of the six task-space singular values (zero when the chain has
/// fewer than six joints).
pub fn smallest_singular_value(j: &Matrix6xX<f64>) -> f64 {
    if j.ncols() < 6 {
        return 0.0;
    }
    let d = DMatrix::from_column_slice(6, j.ncols(), j.as_slice());
    d.singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    m.cholesky()
        .ok_or_else(|| DynamicsError::InvalidInput("mass matrix is not positive definite".into()))
}

/// `(J M^-1 J^T)^-1` for an arbitrary task Jacobian (rows are task directions).
pub fn task_space_inertia(jac: &DMatrix<f64>, mass: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = cholesky(mass.clone())?;
    let inv = jac * chol.solve(&jac.transpose());
    let inv = (&inv + inv.transpose()) * 0.5;
    inv.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(DynamicsError::NearSingular { sigma_min: 0.0 })
}

/// Task-space inertia `M_x = (J M^-1 J^T)^-1`; refuses near-singular poses.
pub fn task_space_mass(model: &ArmModel, q: &DVector<f64>) -> Result<Matrix6<f64>> {
    let chain = ChainFrames::compute(model, q)?;
    let jac = chain.jacobian();
    let sigma_min = smallest_singular_value(&jac);
    if sigma_min <= SINGULAR_THRESHOLD {
        return Err(DynamicsError::NearSingular { sigma_min });
    }
    let mass = crba(model, &chain);
    let jd = DMatrix::from_column_slice(6, jac.ncols(), jac.as_slice());
    let mx = task_space_inertia(&jd, &mass)?;
    Ok(Matrix6::from_iterator(mx.iter().copied()))
}

/// Task-space inertia that stays bounded near singularities: when the
/// smallest Jacobian singular value drops below [`DAMPING_ONSET`] the inverse
/// of `J M^-1 J^T` is taken as a damped least-squares inverse.
pub fn task_space_mass_damped(mass: &DMatrix<f64>, jac: &Matrix6xX<f64>) -> Result<Matrix6<f64>> {
    let chol = cholesky(mass.clone())?;
    let minv_jt = chol.solve(&jac.transpose());
    let inv: Matrix6<f64> = jac * minv_jt;
    let inv = (inv + inv.transpose()) * 0.5;
    if smallest_singular_value(jac) >= DAMPING_ONSET {
        if let Some(c) = inv.cholesky() {
            return Ok(c.inverse());
        }
    }
    let eig = SymmetricEigen::new(inv);
    let lam2 = DAMPING_LAMBDA * DAMPING_LAMBDA;
    let damped = eig.eigenvalues.map(|s| s.max(0.0) / (s * s + lam2));
    Ok(eig.eigenvectors * Matrix6::from_diagonal(&damped) * eig.eigenvectors.transpose())
}

/// Forward dynamics: joint accelerations for the given torques and tool wrench.
pub fn forward_dynamics(
    model: &ArmModel,
    state: &JointState,
    tau: &DVector<f64>,
    f_ext: &Vector6<f64>,
) -> Result<DVector<f64>> {
    model.check_dim(&state.qd, "qd")?;
    model.check_dim(tau, "tau")?;
    if !f_ext.iter().all(|x| x.is_finite()) {
        return Err(DynamicsError::InvalidInput(
            "external wrench is not finite".into(),
        ));
    }
    let chain = ChainFrames::compute(model, &state.q)?;
    let mass = crba(model, &chain);
    let bias = rnea(model, &chain, &state.qd, &DVector::zeros(model.dof()), true);
    let friction = DVector::from_iterator(
        model.dof(),
        model
            .joints
            .iter()
            .zip(state.qd.iter())
            .map(|(j, v)| j.friction * v),
    );
    let rhs = tau + chain.jacobian().transpose() * f_ext - bias - friction;
    Ok(cholesky(mass)?.solve(&rhs))
}

/// Semi-implicit Euler step: velocities first, then positions with the new
/// velocities. A joint that crosses a limit is clamped and stopped.
pub fn step(
    model: &ArmModel,
    state: &JointState,
    tau: &DVector<f64>,
    f_ext: &Vector6<f64>,
    dt: f64,
) -> Result<JointState> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(DynamicsError::InvalidInput(format!(
            "dt must lie in (0, {MAX_STEP}], got {dt}"
        )));
    }
    let qdd = forward_dynamics(model, state, tau, f_ext)?;
    let mut qd = &state.qd + qdd * dt;
    let mut q = &state.q + &qd * dt;
    for (i, joint) in model.joints.iter().enumerate() {
        if q[i] < joint.limits.0 {
            q[i] = joint.limits.0;
            qd[i] = 0.0;
        } else if q[i] > joint.limits.1 {
            q[i] = joint.limits.1;
            qd[i] = 0.0;
        }
    }
    Ok(JointState { q, qd })
}

pub fn kinetic_energy(model: &ArmModel, state: &JointState) -> Result<f64> {
    let m = mass_matrix(model, &state.q)?;
    Ok(0.5 * state.qd.dot(&(m * &state.qd)))
}

/// Gravitational potential energy relative to the base origin.
pub fn potential_energy(model: &ArmModel, q: &DVector<f64>) -> Result<f64> {
    let chain = ChainFrames::compute(model, q)?;
    Ok(model
        .links
        .iter()
        .zip(&chain.coms)
        .map(|(l, c)| -l.mass * model.gravity.dot(c))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::jacobian;

    fn pendulum() -> ArmModel {
        // Rotates about y so gravity (-z) acts in the swing plane; q = 0 is horizontal.
        ArmModel::pendulum(1.0, 1.0, Vector3::y(), Vector3::new(0.0, 0.0, -9.81))
    }

    #[test]
    fn point_mass_pendulum_inertia_and_gravity() {
        let m = pendulum();
        let q = DVector::zeros(1);
        assert!((mass_matrix(&m, &q).unwrap()[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((gravity_term(&m, &q).unwrap()[0].abs() - 9.81).abs() < 1e-12);
        let q60 = DVector::from_element(1, std::f64::consts::FRAC_PI_3);
        assert!((gravity_term(&m, &q60).unwrap()[0].abs() - 9.81 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn gravity_compensation_holds_still() {
        let m = ArmModel::seven_dof(0.1);
        let q = DVector::from_vec(vec![0.3, 0.7, -0.2, 1.4, 0.1, 0.8, 0.0]);
        let s = JointState::at_rest(q.clone());
        let g = gravity_term(&m, &q).unwrap();
        let next = step(&m, &s, &g, &Vector6::zeros(), 1e-3).unwrap();
        assert!((next.q - q).norm() < 1e-14);
        assert!(next.qd.norm() < 1e-12);
    }

    #[test]
    fn constant_torque_without_gravity() {
        let m = ArmModel::pendulum(2.0, 0.5, Vector3::z(), Vector3::zeros());
        let mut s = JointState::at_rest(DVector::zeros(1));
        let tau = DVector::from_element(1, 1.0);
        let inertia = 2.0 * 0.25;
        for k in 1..=10 {
            let prev = s.qd[0];
            s = step(&m, &s, &tau, &Vector6::zeros(), 1e-3).unwrap();
            assert!(
                ((s.qd[0] - prev) / 1e-3 - 1.0 / inertia).abs() < 1e-9,
                "step {k}"
            );
        }
    }

    #[test]
    fn step_rejects_bad_input() {
        let m = pendulum();
        let s = JointState::at_rest(DVector::zeros(1));
        let tau = DVector::from_element(1, f64::NAN);
        assert!(step(&m, &s, &tau, &Vector6::zeros(), 1e-3).is_err());
        assert!(step(&m, &s, &DVector::zeros(1), &Vector6::zeros(), 0.0).is_err());
        assert!(step(&m, &s, &DVector::zeros(1), &Vector6::zeros(), 0.01).is_err());
    }

    #[test]
    fn joint_limit_clamps_and_stops() {
        let mut m = ArmModel::pendulum(1.0, 1.0, Vector3::z(), Vector3::zeros());
        m.joints[0].limits = (-0.1, 0.1);
        let s = JointState {
            q: DVector::from_element(1, 0.0999),
            qd: DVector::from_element(1, 1.0),
        };
        let n = step(&m, &s, &DVector::zeros(1), &Vector6::zeros(), 1e-3).unwrap();
        assert_eq!(n.q[0], 0.1);
        assert_eq!(n.qd[0], 0.0);
    }

    #[test]
    fn pendulum_task_mass_along_motion_direction() {
        let m = pendulum();
        let q = DVector::zeros(1);
        let j = jacobian(&m, &q).unwrap();
        // At q = 0 the tip moves along -z for positive rotation about y.
        let row = DMatrix::from_row_slice(1, 1, &[j[(2, 0)]]);
        let mx = task_space_inertia(&row, &mass_matrix(&m, &q).unwrap()).unwrap();
        assert!((mx[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stretched_arm_is_near_singular() {
        let m = ArmModel::seven_dof(0.1);
        let err = task_space_mass(&m, &DVector::zeros(7)).unwrap_err();
        assert!(matches!(err, DynamicsError::NearSingular { .. }));
        let chain = ChainFrames::compute(&m, &DVector::zeros(7)).unwrap();
        let damped = task_space_mass_damped(&crba(&m, &chain), &chain.jacobian()).unwrap();
        assert!(damped.iter().all(|x| x.is_finite()));
    }
}
