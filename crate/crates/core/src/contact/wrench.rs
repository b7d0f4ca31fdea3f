use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::{ContactError, Result, SurfaceModel};
use crate::dynamics::CartesianPose;

/// Single contact point, given in the tool frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ToolGeometry {
    pub offset: Vector3<f64>,
}

impl ToolGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.offset.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ContactError::InvalidInput(
                "tool contact offset is not finite".into(),
            ))
        }
    }

    pub fn contact_point(&self, pose: &CartesianPose) -> Vector3<f64> {
        pose.position + pose.rotation * self.offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSample {
    /// Wrench on the tool about the tool origin: force then moment.
    pub wrench: Vector6<f64>,
    pub contact: bool,
    /// Penetration along the local normal (positive inside).
    pub penetration: f64,
    /// Upward surface normal under the contact point.
    pub normal: Vector3<f64>,
}

/// Spring-damper contact of the tool point against the surface:
/// `(k_c d - b_c v_n)+ n - mu_v v_t` with `d = (h - z) n_z`.
pub fn contact_wrench(
    surface: &SurfaceModel,
    tool: &ToolGeometry,
    pose: &CartesianPose,
    twist: &Vector6<f64>,
) -> Result<ContactSample> {
    if !(pose
        .position
        .iter()
        .chain(pose.rotation.iter())
        .chain(twist.iter())
        .all(|v| v.is_finite()))
    {
        return Err(ContactError::InvalidInput(
            "tool pose or twist is not finite".into(),
        ));
    }
    let c = tool.contact_point(pose);
    let height = surface.field.height(c.x, c.y)?;
    let normal = surface.field.normal(c.x, c.y)?;
    let penetration = (height - c.z) * normal.z;
    if penetration <= 0.0 {
        return Ok(ContactSample {
            wrench: Vector6::zeros(),
            contact: false,
            penetration,
            normal,
        });
    }
    let lever = c - pose.position;
    let v = twist.fixed_rows::<3>(0) + twist.fixed_rows::<3>(3).cross(&lever);
    let v_n = v.dot(&normal);
    let v_t = v - normal * v_n;
    let p = &surface.params;
    let push = (p.k_c * penetration - p.b_c * v_n).max(0.0);
    let force = normal * push - v_t * p.mu_v;
    let moment = lever.cross(&force);
    Ok(ContactSample {
        wrench: Vector6::new(force.x, force.y, force.z, moment.x, moment.y, moment.z),
        contact: true,
        penetration,
        normal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{HeightField, SurfaceParams};
    use nalgebra::Matrix3;

    fn flat() -> SurfaceModel {
        let f = HeightField::from_fn((-1.0, 1.0), (-1.0, 1.0), 0.01, |_, _| 0.1).unwrap();
        SurfaceModel::new(
            f,
            SurfaceParams {
                k_c: 1e4,
                b_c: 50.0,
                mu_v: 2.0,
            },
        )
        .unwrap()
    }

    fn at(z: f64) -> CartesianPose {
        CartesianPose::new(Vector3::new(0.2, 0.0, z), Matrix3::identity())
    }

    #[test]
    fn above_surface_is_free() {
        let s = contact_wrench(
            &flat(),
            &ToolGeometry::default(),
            &at(0.101),
            &Vector6::zeros(),
        )
        .unwrap();
        assert!(!s.contact);
        assert_eq!(s.wrench, Vector6::zeros());
    }

    #[test]
    fn static_penetration_gives_spring_force() {
        let s = contact_wrench(
            &flat(),
            &ToolGeometry::default(),
            &at(0.098),
            &Vector6::zeros(),
        )
        .unwrap();
        assert!(s.contact);
        assert!((s.penetration - 0.002).abs() < 1e-12);
        assert!((s.wrench - Vector6::new(0.0, 0.0, 20.0, 0.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn offset_point_produces_moment_and_clamp_holds() {
        let tool = ToolGeometry {
            offset: Vector3::new(0.0, 0.0, 0.05),
        };
        let s = contact_wrench(&flat(), &tool, &at(0.048), &Vector6::zeros()).unwrap();
        assert!((s.penetration - 0.002).abs() < 1e-12);
        assert!(s.wrench.fixed_rows::<3>(3).norm() < 1e-12);
        let tilted = CartesianPose::new(
            Vector3::new(0.0, 0.0, 0.05),
            nalgebra::Rotation3::from_euler_angles(0.0, -0.5, 0.0).into_inner(),
        );
        let c = tool.contact_point(&tilted);
        let s = contact_wrench(&flat(), &tool, &tilted, &Vector6::zeros()).unwrap();
        assert!(s.contact);
        let f = s.wrench.fixed_rows::<3>(0).into_owned();
        assert!((s.wrench.fixed_rows::<3>(3) - (c - tilted.position).cross(&f)).norm() < 1e-12);
        let leaving = Vector6::new(0.0, 0.0, 10.0, 0.0, 0.0, 0.0);
        let s = contact_wrench(&flat(), &ToolGeometry::default(), &at(0.099), &leaving).unwrap();
        assert!(s.contact && s.wrench[2] == 0.0);
    }

    #[test]
    fn outside_field_is_an_error() {
        let pose = CartesianPose::new(Vector3::new(2.0, 0.0, 0.0), Matrix3::identity());
        assert!(matches!(
            contact_wrench(&flat(), &ToolGeometry::default(), &pose, &Vector6::zeros()),
            Err(ContactError::OutOfDomain { .. })
        ));
    }
}
