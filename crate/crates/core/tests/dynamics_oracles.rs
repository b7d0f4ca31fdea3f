use nalgebra::{
    DMatrix, DVector, Isometry3, Matrix3, Matrix6xX, Unit, UnitQuaternion, Vector3, Vector6,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surfteach_core::dynamics::*;

fn random_q(model: &ArmModel, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_iterator(
        model.dof(),
        model
            .joints
            .iter()
            .map(|j| rng.random_range(j.limits.0 * 0.95..j.limits.1 * 0.95)),
    )
}

/// Tool pose by explicit transform composition.
fn compose(model: &ArmModel, q: &DVector<f64>) -> Isometry3<f64> {
    let mut t = Isometry3::identity();
    for (j, &qi) in model.joints.iter().zip(q.iter()) {
        let spin = UnitQuaternion::from_axis_angle(&Unit::new_normalize(j.axis), qi);
        t = t * j.parent * Isometry3::from_parts(Default::default(), spin);
    }
    t * model.tool
}

fn rot_log(r: &Matrix3<f64>) -> Vector3<f64> {
    UnitQuaternion::from_matrix(r).scaled_axis()
}

fn fd_jacobian(model: &ArmModel, q: &DVector<f64>, h: f64) -> Matrix6xX<f64> {
    let mut j = Matrix6xX::zeros(model.dof());
    for i in 0..model.dof() {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        let (a, b) = (compose(model, &qp), compose(model, &qm));
        let dp = (a.translation.vector - b.translation.vector) / (2.0 * h);
        let dr = rot_log(
            &(a.rotation.to_rotation_matrix().matrix()
                * b.rotation.to_rotation_matrix().matrix().transpose()),
        ) / (2.0 * h);
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&dp);
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&dr);
    }
    j
}

#[test]
fn forward_kinematics_matches_composition() {
    let model = ArmModel::seven_dof(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let q = random_q(&model, &mut rng);
        let pose = forward_kinematics(&model, &q).unwrap();
        let t = compose(&model, &q);
        assert!((pose.position - t.translation.vector).norm() < 1e-12);
        let r = pose.rotation;
        assert!((r - t.rotation.to_rotation_matrix().matrix()).norm() < 1e-12);
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }
    let zero = DVector::zeros(7);
    let height: f64 = 0.34 + 0.2 * 4.0 + 0.126 + 0.1;
    assert!(
        (forward_kinematics(&model, &zero).unwrap().position - Vector3::new(0.0, 0.0, height))
            .norm()
            < 1e-12
    );
}

#[test]
fn jacobian_matches_central_differences_over_1000_configurations() {
    let model = ArmModel::seven_dof(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q = random_q(&model, &mut rng);
        let j = jacobian(&model, &q).unwrap();
        let fd = fd_jacobian(&model, &q, 1e-6);
        worst = worst.max((&j - &fd).norm() / j.norm());
    }
    assert!(worst <= 1e-6, "worst relative Jacobian error {worst:e}");
}

#[test]
fn stretched_pose_is_singular() {
    let model = ArmModel::seven_dof(0.1);
    let q = DVector::zeros(7);
    let j = jacobian(&model, &q).unwrap();
    assert!(smallest_singular_value(&j) < 1e-8);
    assert!(matches!(
        task_space_mass(&model, &q),
        Err(DynamicsError::NearSingular { .. })
    ));
    let mx = task_space_mass_damped(&mass_matrix(&model, &q).unwrap(), &j).unwrap();
    assert!(mx.iter().all(|v| v.is_finite()));
}

#[test]
fn jdot_qdot_matches_finite_differences() {
    let model = ArmModel::seven_dof(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let q = random_q(&model, &mut rng);
        let qd = DVector::from_iterator(7, (0..7).map(|_| rng.random_range(-1.5..1.5)));
        let h = 1e-6;
        let jp = jacobian(&model, &(&q + &qd * h)).unwrap();
        let jm = jacobian(&model, &(&q - &qd * h)).unwrap();
        let fd: Vector6<f64> = (jp - jm) / (2.0 * h) * &qd;
        let a = jdot_qdot(&model, &q, &qd).unwrap();
        assert!((a - fd).norm() < 1e-5, "{a} vs {fd}");
    }
}

#[test]
fn two_link_mass_matrix_matches_closed_form() {
    let (m1, m2, l1, l2) = (1.3, 0.7, 0.5, 0.4);
    let model = ArmModel::planar(&[m1, m2], &[l1, l2]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let q: DVector<f64> = DVector::from_vec(vec![
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        ]);
        let c2 = q[1].cos();
        let m11 = m1 * l1 * l1 + m2 * (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c2);
        let m12 = m2 * (l2 * l2 + l1 * l2 * c2);
        let m22 = m2 * l2 * l2;
        let m = mass_matrix(&model, &q).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22]);
        assert!((m - expect).norm() < 1e-12);

        // Closed-form velocity products and gravity (gravity along -y).
        let qd: DVector<f64> = DVector::from_vec(vec![
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        ]);
        let hh = m2 * l1 * l2 * q[1].sin();
        let c = DVector::from_vec(vec![
            -hh * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]),
            hh * qd[0] * qd[0],
        ]);
        assert!((coriolis_term(&model, &q, &qd).unwrap() - c).norm() < 1e-12);
        let g = 9.81;
        let g1 = (m1 + m2) * g * l1 * q[0].cos() + m2 * g * l2 * (q[0] + q[1]).cos();
        let g2 = m2 * g * l2 * (q[0] + q[1]).cos();
        assert!(
            (gravity_term(&model, &q).unwrap() - DVector::from_vec(vec![g1, g2])).norm() < 1e-12
        );
    }
}

#[test]
fn mass_matrix_equals_jacobian_sum_and_is_positive_definite() {
    let model = ArmModel::seven_dof(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let q = random_q(&model, &mut rng);
        let chain = ChainFrames::compute(&model, &q).unwrap();
        let mut oracle = DMatrix::zeros(7, 7);
        for i in 0..7 {
            let mut jv = DMatrix::zeros(3, 7);
            let mut jw = DMatrix::zeros(3, 7);
            for k in 0..=i {
                let z = chain.axes[k];
                jv.set_column(k, &z.cross(&(chain.coms[i] - chain.origins[k])));
                jw.set_column(k, &z);
            }
            let inertia = DMatrix::from_column_slice(3, 3, chain.inertias[i].as_slice());
            oracle += jv.transpose() * &jv * model.links[i].mass + jw.transpose() * inertia * &jw;
        }
        let m = mass_matrix(&model, &q).unwrap();
        assert!((&m - &oracle).norm() < 1e-10 * oracle.norm());
        assert!(m.cholesky().is_some());
    }
}

#[test]
fn velocity_products_match_christoffel_oracle() {
    let model = ArmModel::seven_dof(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-6;
    for _ in 0..50 {
        let q = random_q(&model, &mut rng);
        let qd = DVector::from_iterator(7, (0..7).map(|_| rng.random_range(-1.0..1.0)));
        // C qd = Mdot qd - 1/2 d/dq (qd^T M qd)
        let mdot = (mass_matrix(&model, &(&q + &qd * h)).unwrap()
            - mass_matrix(&model, &(&q - &qd * h)).unwrap())
            / (2.0 * h);
        let mut grad = DVector::zeros(7);
        for i in 0..7 {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            let kp = qd.dot(&(mass_matrix(&model, &qp).unwrap() * &qd));
            let km = qd.dot(&(mass_matrix(&model, &qm).unwrap() * &qd));
            grad[i] = (kp - km) / (2.0 * h);
        }
        let oracle = mdot * &qd - grad * 0.5;
        let c = coriolis_term(&model, &q, &qd).unwrap();
        assert!(
            (&c - &oracle).norm() < 1e-5 * (1.0 + oracle.norm()),
            "{c} vs {oracle}"
        );
    }
}

#[test]
fn gravity_matches_potential_gradient() {
    let model = ArmModel::seven_dof(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let q = random_q(&model, &mut rng);
        let chain = ChainFrames::compute(&model, &q).unwrap();
        let oracle = DVector::from_iterator(
            7,
            (0..7).map(|k| {
                (k..7)
                    .map(|i| {
                        let lever = chain.axes[k].cross(&(chain.coms[i] - chain.origins[k]));
                        -model.links[i].mass * model.gravity.dot(&lever)
                    })
                    .sum::<f64>()
            }),
        );
        assert!((gravity_term(&model, &q).unwrap() - oracle).norm() < 1e-10);
    }
}

/// Energy at a synchronized state: semi-implicit Euler carries velocities a
/// half step behind positions, so the velocity at `q_n` is the mean of the
/// incoming and outgoing step velocities.
fn synchronized_energy(model: &ArmModel, s: &JointState, dt: f64) -> f64 {
    let n = model.dof();
    let qdd = forward_dynamics(model, s, &DVector::zeros(n), &Vector6::zeros()).unwrap();
    let mid = JointState {
        q: s.q.clone(),
        qd: &s.qd + qdd * (0.5 * dt),
    };
    kinetic_energy(model, &mid).unwrap() + potential_energy(model, &s.q).unwrap()
}

#[test]
fn passive_pendulum_energy_drift_below_tenth_percent() {
    for amplitude in [0.3f64, 1.0, std::f64::consts::FRAC_PI_2] {
        let model = ArmModel::pendulum(1.0, 1.0, Vector3::y(), Vector3::new(0.0, 0.0, -9.81));
        // q = pi/2 hangs straight down; energies are measured above that rest point.
        let bottom = potential_energy(
            &model,
            &DVector::from_element(1, std::f64::consts::FRAC_PI_2),
        )
        .unwrap();
        let mut s = JointState::at_rest(DVector::from_element(
            1,
            std::f64::consts::FRAC_PI_2 - amplitude,
        ));
        let e0 = synchronized_energy(&model, &s, 1e-3) - bottom;
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            s = step(&model, &s, &DVector::zeros(1), &Vector6::zeros(), 1e-3).unwrap();
            worst = worst.max(((synchronized_energy(&model, &s, 1e-3) - bottom) - e0).abs() / e0);
        }
        assert!(worst < 1e-3, "amplitude {amplitude}: drift {worst:e}");
    }
}

fn double_pendulum_drift(dt: f64) -> f64 {
    let model = ArmModel::planar(&[1.0, 0.8], &[0.5, 0.4]);
    let bottom = potential_energy(
        &model,
        &DVector::from_vec(vec![-std::f64::consts::FRAC_PI_2, 0.0]),
    )
    .unwrap();
    let mut s = JointState::at_rest(DVector::from_vec(vec![-1.0, 0.3]));
    let e0 = synchronized_energy(&model, &s, dt) - bottom;
    let mut worst: f64 = 0.0;
    for _ in 0..(10.0 / dt).round() as usize {
        s = step(&model, &s, &DVector::zeros(2), &Vector6::zeros(), dt).unwrap();
        worst = worst.max(((synchronized_energy(&model, &s, dt) - bottom) - e0).abs() / e0);
    }
    worst
}

#[test]
fn double_pendulum_energy_error_is_first_order_in_dt() {
    let coarse = double_pendulum_drift(1e-3);
    let fine = double_pendulum_drift(1e-4);
    assert!(coarse < 5e-3, "drift {coarse:e}");
    assert!(
        fine < 0.15 * coarse,
        "drift {fine:e} at 0.1 ms vs {coarse:e} at 1 ms"
    );
}

#[test]
fn viscous_friction_only_removes_energy() {
    let mut model = ArmModel::planar(&[1.0, 0.8], &[0.5, 0.4]);
    for j in &mut model.joints {
        j.friction = 0.3;
    }
    let mut s = JointState::at_rest(DVector::from_vec(vec![0.0, 0.5]));
    let mut last = synchronized_energy(&model, &s, 1e-3);
    for k in 1..=5000 {
        s = step(&model, &s, &DVector::zeros(2), &Vector6::zeros(), 1e-3).unwrap();
        if k % 50 == 0 {
            let e = synchronized_energy(&model, &s, 1e-3);
            assert!(
                e <= last + 1e-9,
                "energy rose from {last} to {e} at step {k}"
            );
            last = e;
        }
    }
}

#[test]
fn task_space_mass_is_symmetric_positive_definite() {
    let model = ArmModel::seven_dof(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    while checked < 200 {
        let q = random_q(&model, &mut rng);
        if smallest_singular_value(&jacobian(&model, &q).unwrap()) < 1e-2 {
            continue;
        }
        let mx = task_space_mass(&model, &q).unwrap();
        assert!((mx - mx.transpose()).norm() <= 1e-9 * mx.norm());
        assert!(mx.cholesky().is_some());
        checked += 1;
    }
}

#[test]
fn inverse_kinematics_round_trip() {
    let model = ArmModel::seven_dof(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut converged = 0;
    for _ in 0..100 {
        let q = random_q(&model, &mut rng);
        let target = forward_kinematics(&model, &q).unwrap();
        let seed = DVector::from_iterator(7, q.iter().map(|v| v + rng.random_range(-0.15..0.15)));
        let sol = inverse_kinematics(&model, &target, &seed, &IkOptions::default()).unwrap();
        if sol.converged {
            let reached = forward_kinematics(&model, &sol.q).unwrap();
            assert!((reached.position - target.position).norm() <= 1e-3);
            assert!(model.within_limits(&sol.q));
            converged += 1;
        }
    }
    assert!(converged >= 95, "only {converged}/100 converged");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gravity_compensation_holds_still(q in prop::collection::vec(-1.5..1.5f64, 7)) {
        let model = ArmModel::seven_dof(0.1);
        let q = DVector::from_vec(q);
        let tau = gravity_term(&model, &q).unwrap();
        let s = step(&model, &JointState::at_rest(q.clone()), &tau, &Vector6::zeros(), 1e-3).unwrap();
        prop_assert!((s.q - q).norm() < 1e-12);
        prop_assert!(s.qd.norm() < 1e-9);
    }

    #[test]
    fn external_wrench_enters_through_jacobian_transpose(
        q in prop::collection::vec(-1.5..1.5f64, 7),
        f in prop::collection::vec(-20.0..20.0f64, 6),
    ) {
        let model = ArmModel::seven_dof(0.1);
        let q = DVector::from_vec(q);
        let f = Vector6::from_column_slice(&f);
        let s = JointState::at_rest(q.clone());
        let g = gravity_term(&model, &q).unwrap();
        let with_wrench = forward_dynamics(&model, &s, &g, &f).unwrap();
        let tau = &g + jacobian(&model, &q).unwrap().transpose() * f;
        let with_torque = forward_dynamics(&model, &s, &tau, &Vector6::zeros()).unwrap();
        prop_assert!((with_wrench - with_torque).norm() < 1e-9 * (1.0 + f.norm()));
    }
}
