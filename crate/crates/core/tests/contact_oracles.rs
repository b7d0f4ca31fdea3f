use nalgebra::{Matrix3, Vector3, Vector6};
use proptest::prelude::*;

use surfteach_core::contact::{
    contact_wrench, surface_from_cloud, ContactError, HeightField, SurfaceModel, SurfaceParams,
    ToolGeometry,
};
use surfteach_core::dynamics::CartesianPose;
use surfteach_core::geometry::{render_depth, CameraModel, OrganizedPointCloud, Primitive};

fn camera() -> CameraModel {
    CameraModel::looking_down(525.0, 525.0, 319.5, 239.5, Vector3::new(0.55, 0.0, 1.0)).unwrap()
}

fn sensed(primitive: &Primitive) -> OrganizedPointCloud {
    let cam = camera();
    OrganizedPointCloud::from_depth(&render_depth(primitive, &cam, 640, 480).unwrap(), &cam)
}

fn flat(z: f64) -> SurfaceModel {
    SurfaceModel::new(
        HeightField::from_fn((0.0, 1.0), (-0.5, 0.5), 0.005, |_, _| z).unwrap(),
        SurfaceParams::default(),
    )
    .unwrap()
}

fn tip(x: f64, y: f64, z: f64) -> CartesianPose {
    CartesianPose::new(Vector3::new(x, y, z), Matrix3::identity())
}

#[test]
fn flat_cloud_gives_constant_field_and_exact_penetration() {
    let plane = Primitive::Plane { z: 0.1 };
    let surf = surface_from_cloud(&sensed(&plane), &camera(), SurfaceParams::default()).unwrap();
    let (nx, ny) = surf.field.dims();
    for j in 0..ny {
        for i in 0..nx {
            assert!((surf.field.sample(i, j) - 0.1).abs() < 1e-12);
        }
    }
    for &(x, y, depth) in &[(0.5, 0.0, 0.001), (0.6, 0.1, 0.0035), (0.45, -0.2, 0.0001)] {
        let s = contact_wrench(
            &surf,
            &ToolGeometry::default(),
            &tip(x, y, 0.1 - depth),
            &Vector6::zeros(),
        )
        .unwrap();
        assert!((s.penetration - depth).abs() < 1e-12);
        assert!((s.wrench[2] - 1e4 * depth).abs() < 1e-8);
    }
}

#[test]
fn sensed_cap_peak_matches_analytic_height() {
    let cap = Primitive::SphereCap {
        cx: 0.55,
        cy: 0.0,
        base_z: 0.05,
        radius: 0.2,
        cap_height: 0.08,
    };
    let surf = surface_from_cloud(&sensed(&cap), &camera(), SurfaceParams::default()).unwrap();
    let peak = surf.field.max_height();
    assert!((peak - 0.13).abs() < 0.002, "peak {peak}");
    // Away from the rim crease the field follows the sphere closely.
    for &(x, y) in &[(0.55, 0.0), (0.6, 0.05), (0.5, -0.08), (0.45, 0.02)] {
        let h = surf.field.height(x, y).unwrap();
        assert!(
            (h - cap.height(x, y)).abs() < 0.001,
            "({x}, {y}): {h} vs {}",
            cap.height(x, y)
        );
    }
}

#[test]
fn mostly_invalid_cloud_is_rejected() {
    let cam = camera();
    let mut depth = render_depth(&Primitive::Plane { z: 0.1 }, &cam, 64, 48).unwrap();
    for d in depth.depth.iter_mut().take(64 * 25) {
        *d = f64::NAN;
    }
    let cloud = OrganizedPointCloud::from_depth(&depth, &cam);
    assert!(matches!(
        surface_from_cloud(&cloud, &cam, SurfaceParams::default()),
        Err(ContactError::InvalidSurface(_))
    ));
}

#[test]
fn holes_in_the_cloud_are_bridged() {
    let cam = camera();
    let cap = Primitive::SphereCap {
        cx: 0.55,
        cy: 0.0,
        base_z: 0.05,
        radius: 0.2,
        cap_height: 0.08,
    };
    let mut depth = render_depth(&cap, &cam, 640, 480).unwrap();
    for v in 230..250 {
        for u in 310..330 {
            depth.depth[v * 640 + u] = f64::NAN;
        }
    }
    let surf = surface_from_cloud(
        &OrganizedPointCloud::from_depth(&depth, &cam),
        &cam,
        SurfaceParams::default(),
    )
    .unwrap();
    let h = surf.field.height(0.55, 0.0).unwrap();
    assert!((h - 0.13).abs() < 0.001, "bridged height {h}");
}

/// Work done on the tool by the contact force over one vertical cycle,
/// integrated with the trapezoidal rule.
fn cycle_work(surface: &SurfaceModel, amplitude: f64, mean_depth: f64, period: f64) -> f64 {
    let steps = 20_000;
    let dt = period / steps as f64;
    let omega = std::f64::consts::TAU / period;
    let force = |t: f64| {
        let z = 0.1 - mean_depth + amplitude * (omega * t).sin();
        let vz = amplitude * omega * (omega * t).cos();
        let s = contact_wrench(
            surface,
            &ToolGeometry::default(),
            &tip(0.5, 0.0, z),
            &Vector6::new(0.0, 0.0, vz, 0.0, 0.0, 0.0),
        )
        .unwrap();
        s.wrench[2] * vz
    };
    (0..steps)
        .map(|k| 0.5 * (force(k as f64 * dt) + force((k + 1) as f64 * dt)) * dt)
        .sum()
}

#[test]
fn vertical_cycles_dissipate_energy() {
    let surf = flat(0.1);
    for &(amp, depth, period) in &[
        (0.002, 0.001, 0.5),
        (0.003, 0.0, 0.2),
        (0.001, 0.002, 1.0),
        (0.005, 0.004, 0.05),
    ] {
        let w = cycle_work(&surf, amp, depth, period);
        assert!(w <= 1e-9, "work {w} for amplitude {amp}");
    }
    let elastic = SurfaceModel::new(
        surf.field.clone(),
        SurfaceParams {
            b_c: 0.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(cycle_work(&elastic, 0.002, 0.001, 0.5).abs() < 1e-6);
}

proptest! {
    #[test]
    fn normal_force_is_clamped_and_flag_tracks_penetration(
        z in 0.09f64..0.11, vz in -0.5f64..0.5, vx in -0.2f64..0.2,
    ) {
        let surf = flat(0.1);
        let s = contact_wrench(&surf, &ToolGeometry::default(), &tip(0.5, 0.0, z), &Vector6::new(vx, 0.0, vz, 0.0, 0.0, 0.0)).unwrap();
        prop_assert_eq!(s.contact, 0.1 - z > 0.0);
        prop_assert!(s.wrench[2] >= 0.0);
        if !s.contact {
            prop_assert_eq!(s.wrench, Vector6::zeros());
        } else {
            prop_assert!((s.wrench[0] + 2.0 * vx).abs() < 1e-12);
        }
    }

    #[test]
    fn force_is_continuous_in_depth(d in 0.0f64..0.005, vz in -0.2f64..0.2) {
        let surf = flat(0.1);
        let h = 1e-9;
        let f = |depth: f64| {
            contact_wrench(&surf, &ToolGeometry::default(), &tip(0.5, 0.0, 0.1 - depth), &Vector6::new(0.0, 0.0, vz, 0.0, 0.0, 0.0))
                .unwrap()
                .wrench[2]
        };
        // Allowed jump at first touch is the damping clamp only.
        let jump = (f(d + h) - f(d - h)).abs();
        prop_assert!(jump <= 1e4 * 2.0 * h + 50.0 * vz.abs().max(0.0) * f64::from(d < h) + 1e-9);
    }
}
