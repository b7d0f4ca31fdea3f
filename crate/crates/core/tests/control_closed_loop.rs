use nalgebra::{DVector, Matrix3, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use surfteach_core::contact::{SurfaceModel, SurfaceParams, ToolGeometry};
use surfteach_core::control::{
    cartesian_error, ContactForceEstimator, ControlGains, HybridController, MotionTarget,
    PoseTrajectory, SpeedProfile,
};
use surfteach_core::dynamics::{
    forward_kinematics, inverse_kinematics, jacobian, task_space_mass, ArmModel, CartesianPose,
    IkOptions, JointState,
};
use surfteach_core::geometry::{path_frames, Path3D, PathFrame, Primitive};
use surfteach_core::sim::Plant;

const DT: f64 = 1e-3;
const LIMITS: [f64; 7] = [320.0, 320.0, 176.0, 176.0, 110.0, 40.0, 40.0];

fn tool_down() -> Matrix3<f64> {
    // [n x t | t | -n] with t = x, n = z.
    Matrix3::from_columns(&[Vector3::y(), Vector3::x(), -Vector3::z()])
}

fn solve_pose(model: &ArmModel, pose: &CartesianPose) -> DVector<f64> {
    let seed = DVector::from_vec(vec![0.0, 0.44, 0.0, 1.45, 0.0, 1.25, 1.571]);
    let opts = IkOptions {
        position_tolerance: 1e-9,
        orientation_tolerance: 1e-9,
        max_iterations: 2000,
        ..Default::default()
    };
    let sol = inverse_kinematics(model, pose, &seed, &opts).unwrap();
    assert!(
        sol.position_residual < 1e-8 && sol.orientation_residual < 1e-8,
        "IK failed: {sol:?}"
    );
    sol.q
}

fn base_frame(p: Vector3<f64>) -> PathFrame {
    PathFrame {
        p,
        t: Vector3::x(),
        n: Vector3::z(),
        s: Vector3::x().cross(&Vector3::z()),
        tool_rotation: tool_down(),
    }
}

fn stiff_gains(model: &ArmModel, q: &DVector<f64>, frame: &PathFrame) -> ControlGains {
    let g = ControlGains {
        stiffness: [1000.0, 1000.0, 1000.0, 50.0, 50.0, 50.0],
        ..Default::default()
    };
    g.critically_damped(&task_space_mass(model, q).unwrap(), &frame.axes())
}

fn controller(gains: ControlGains) -> HybridController {
    HybridController::new(gains, LIMITS.to_vec(), DT).unwrap()
}

#[test]
fn steady_state_error_is_inverse_stiffness_times_force() {
    let model = ArmModel::seven_dof(0.1);
    let start = std::time::Instant::now();
    let home = CartesianPose::new(Vector3::new(0.55, 0.0, 0.35), tool_down());
    let q0 = solve_pose(&model, &home);
    let frame = base_frame(home.position);
    for axis in 0..3 {
        let mut plant = Plant::new(model.clone(), JointState::at_rest(q0.clone()), DT, 0.0, 1);
        let mut push = Vector6::zeros();
        push[axis] = 10.0;
        plant.set_external_wrench(push);
        let mut ctl = controller(stiff_gains(&model, &q0, &frame));
        let target = MotionTarget::at_rest(home, frame);
        for _ in 0..3000 {
            let s = plant.sense().unwrap();
            let out = ctl
                .update(&plant.model, &plant.state, &target, &s.tau_ext)
                .unwrap();
            plant.advance(&out.tau).unwrap();
        }
        let e = cartesian_error(&forward_kinematics(&model, &plant.state.q).unwrap(), &home);
        assert!((e[axis] - 0.01).abs() <= 0.0002, "axis {axis}: {}", e[axis]);
        for other in (0..3).filter(|&o| o != axis) {
            assert!(
                e[other].abs() < 0.0002,
                "axis {axis} leaks into {other}: {}",
                e[other]
            );
        }
    }
    assert!(start.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn regulation_converges_without_late_overshoot() {
    let model = ArmModel::seven_dof(0.1);
    let home = CartesianPose::new(Vector3::new(0.55, 0.0, 0.35), tool_down());
    let q_off = solve_pose(
        &model,
        &CartesianPose::new(home.position + Vector3::new(0.02, -0.01, 0.01), tool_down()),
    );
    let frame = base_frame(home.position);
    let mut plant = Plant::new(
        model.clone(),
        JointState::at_rest(q_off.clone()),
        DT,
        0.0,
        1,
    );
    let mut ctl = controller(stiff_gains(&model, &q_off, &frame));
    let target = MotionTarget::at_rest(home, frame);
    let mut norms = Vec::new();
    for _ in 0..2000 {
        let s = plant.sense().unwrap();
        let out = ctl
            .update(&plant.model, &plant.state, &target, &s.tau_ext)
            .unwrap();
        norms.push(out.error.fixed_rows::<3>(0).norm());
        plant.advance(&out.tau).unwrap();
    }
    let final_err = cartesian_error(&forward_kinematics(&model, &plant.state.q).unwrap(), &home);
    assert!(
        final_err.fixed_rows::<3>(0).norm() < 1e-4,
        "{}",
        final_err.fixed_rows::<3>(0).norm()
    );
    // Find the first local minimum and the overshoot peak after it; from the
    // peak on the error must shrink monotonically.
    let local_min =
        (1..norms.len() - 1).find(|&k| norms[k] < norms[k - 1] && norms[k] <= norms[k + 1]);
    let from = match local_min {
        Some(m) => (m + 1..norms.len() - 1)
            .find(|&k| norms[k] >= norms[k - 1] && norms[k] > norms[k + 1])
            .unwrap_or(m),
        None => 0,
    };
    assert!(
        norms[from] <= 0.1 * norms[0],
        "overshoot {} vs initial {}",
        norms[from],
        norms[0]
    );
    assert!(
        norms[from..].windows(2).all(|w| w[1] <= w[0]),
        "error grows again after the first overshoot"
    );
}

#[test]
fn filtered_wrench_noise_stays_below_one_newton() {
    let model = ArmModel::seven_dof(0.1);
    let q = solve_pose(
        &model,
        &CartesianPose::new(Vector3::new(0.55, 0.0, 0.3), tool_down()),
    );
    let f = Vector6::new(0.0, 0.0, -10.0, 0.0, 0.0, 0.0);
    let clean = jacobian(&model, &q).unwrap().transpose() * f;
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut sq = 0.0;
    let mut count = 0;
    for trial in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let mut est = ContactForceEstimator::new(DT);
        for k in 0..1000 {
            let tau = DVector::from_iterator(7, clean.iter().map(|c| c + noise.sample(&mut rng)));
            let out = est.update(&model, &q, &tau);
            if k >= 200 {
                sq += (out.filtered - f).fixed_rows::<3>(0).norm_squared();
                count += 1;
            }
        }
    }
    let rms = (sq / count as f64).sqrt();
    assert!(rms < 1.0, "filtered force RMS error {rms}");
}

struct Run {
    forces: Vec<f64>,
    contact: Vec<bool>,
    tangential: Vec<f64>,
}

/// Approach from 2 cm above, press with the force loop, then traverse the path.
fn press_and_track(primitive: Primitive, points: Vec<Vector3<f64>>, seed: u64) -> Run {
    let model = ArmModel::seven_dof(0.1);
    let normals: Vec<_> = points.iter().map(|p| primitive.normal(p.x, p.y)).collect();
    let frames = path_frames(&Path3D::new(points, normals).unwrap()).unwrap();
    let surface = SurfaceModel::from_primitive(
        &primitive,
        (0.2, 0.9),
        (-0.35, 0.35),
        0.001,
        SurfaceParams::default(),
    )
    .unwrap();
    let f0 = frames[0];
    let above = CartesianPose::new(f0.p + f0.n * 0.02, f0.tool_rotation);
    let q0 = solve_pose(&model, &above);
    let mut plant = Plant::new(
        model.clone(),
        JointState::at_rest(q0.clone()),
        DT,
        0.05,
        seed,
    )
    .with_surface(surface, ToolGeometry::default());
    let gains = ControlGains::default()
        .critically_damped(&task_space_mass(&model, &q0).unwrap(), &f0.axes());
    let mut ctl = controller(gains);
    let mut run = Run {
        forces: vec![],
        contact: vec![],
        tangential: vec![],
    };

    // Descend under impedance until touch.
    let press = MotionTarget::at_rest(CartesianPose::new(f0.p - f0.n * 0.02, f0.tool_rotation), f0);
    let mut touched = false;
    for _ in 0..3000 {
        let s = plant.sense().unwrap();
        let out = ctl
            .update(&plant.model, &plant.state, &press, &s.tau_ext)
            .unwrap();
        if s.contact.is_some_and(|c| c.contact) && out.measured_normal > 1.0 {
            touched = true;
            break;
        }
        plant.advance(&out.tau).unwrap();
    }
    assert!(touched, "never touched the surface");
    ctl.set_force_enabled(true);
    let hold = MotionTarget::at_rest(CartesianPose::new(f0.p, f0.tool_rotation), f0);
    let traj = PoseTrajectory::new(frames, SpeedProfile::default()).unwrap();
    let settle = 500;
    let total = settle + (traj.duration() / DT).ceil() as usize + 200;
    for k in 0..total {
        let target = if k < settle {
            hold
        } else {
            traj.sample((k - settle) as f64 * DT)
        };
        let s = plant.sense().unwrap();
        let out = ctl
            .update(&plant.model, &plant.state, &target, &s.tau_ext)
            .unwrap();
        let c = s.contact.unwrap();
        run.contact.push(c.contact);
        run.forces.push(c.wrench.fixed_rows::<3>(0).dot(&c.normal));
        if k >= settle {
            let e = s.pose.position - target.pose.position;
            let n = target.frame.n;
            run.tangential.push((e - n * e.dot(&n)).norm());
        }
        plant.advance(&out.tau).unwrap();
    }
    run
}

fn check_run(run: &Run, label: &str) {
    let lost = run.contact.iter().filter(|c| !**c).count();
    assert_eq!(lost, 0, "{label}: {lost} contact-loss samples");
    let steady = &run.forces[300..];
    let mean = steady.iter().sum::<f64>() / steady.len() as f64;
    assert!(
        (mean - 10.0).abs() <= 0.5,
        "{label}: mean normal force {mean}"
    );
    let rms =
        (run.tangential.iter().map(|e| e * e).sum::<f64>() / run.tangential.len() as f64).sqrt();
    assert!(rms < 0.002, "{label}: tangential RMS {rms}");
}

#[test]
fn force_loop_holds_ten_newtons_on_a_plane() {
    let plane = Primitive::Plane { z: 0.1 };
    let points = (0..=30)
        .map(|i| Vector3::new(0.4 + 0.01 * i as f64, 0.0, 0.1))
        .collect();
    check_run(&press_and_track(plane, points, 3), "plane");
}

#[test]
fn force_loop_holds_ten_newtons_on_a_sphere_cap() {
    let cap = Primitive::SphereCap {
        cx: 0.55,
        cy: 0.0,
        base_z: 0.05,
        radius: 0.2,
        cap_height: 0.08,
    };
    let points = (0..=30)
        .map(|i| {
            let y = -0.075 + 0.005 * i as f64;
            Vector3::new(0.55, y, cap.height(0.55, y))
        })
        .collect();
    check_run(&press_and_track(cap, points, 4), "cap");
}
