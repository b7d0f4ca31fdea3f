use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, Result};

/// Pinhole intrinsics plus the calibrated sensor pose in the robot base frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub sensor_to_base: Isometry3<f64>,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, sensor_to_base: Isometry3<f64>) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(GeometryError::InvalidInput(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(GeometryError::InvalidInput(
                "principal point must be finite".into(),
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            sensor_to_base,
        })
    }

    /// Builds the extrinsic transform from a position and a rotation matrix,
    /// rejecting matrices that are not proper rotations.
    pub fn extrinsic_from_matrix(
        position: Vector3<f64>,
        rotation: Matrix3<f64>,
    ) -> Result<Isometry3<f64>> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if err > 1e-6 || (rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(GeometryError::InvalidInput(
                "sensor rotation must be orthonormal with determinant +1".into(),
            ));
        }
        let rot = Rotation3::from_matrix_unchecked(rotation);
        Ok(Isometry3::from_parts(
            Translation3::from(position),
            UnitQuaternion::from_rotation_matrix(&rot),
        ))
    }

    /// A camera at `position` whose optical axis points straight down (base -z),
    /// with image x along base +x and image y along base -y.
    pub fn looking_down(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        position: Vector3<f64>,
    ) -> Result<Self> {
        let rotation = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        let iso = Self::extrinsic_from_matrix(position, rotation)?;
        Self::new(fx, fy, cx, cy, iso)
    }

    /// Back-projects a pixel with known depth (z along the optical axis) into the sensor frame.
    pub fn deproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        Vector3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        )
    }

    /// Projects a sensor-frame point onto the image plane.
    pub fn project_sensor(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Projects a base-frame point onto the image plane.
    pub fn project(&self, p_base: &Vector3<f64>) -> Option<(f64, f64)> {
        self.project_sensor(&self.base_to_sensor(p_base))
    }

    /// Unit viewing ray through a pixel, in the sensor frame.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        self.deproject(u, v, 1.0).normalize()
    }

    pub fn sensor_to_base_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (self.sensor_to_base * Point3::from(*p)).coords
    }

    pub fn sensor_to_base_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.sensor_to_base.rotation * v
    }

    pub fn base_to_sensor(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (self.sensor_to_base.inverse() * Point3::from(*p)).coords
    }

    /// Sensor origin expressed in the base frame.
    pub fn origin_in_base(&self) -> Vector3<f64> {
        self.sensor_to_base.translation.vector
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraModel {
        CameraModel::looking_down(300.0, 300.0, 160.0, 120.0, Vector3::new(0.5, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn principal_ray_maps_to_optical_axis() {
        let c = cam();
        let p = c.deproject(c.cx, c.cy, 1.0);
        assert_eq!(p, Vector3::new(0.0, 0.0, 1.0));
        let b = c.sensor_to_base_point(&p);
        assert!((b - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn reprojection_round_trip() {
        let c = cam();
        for &(u, v, d) in &[(0.0, 0.0, 0.7), (319.0, 239.0, 1.3), (42.5, 17.25, 0.95)] {
            let pb = c.sensor_to_base_point(&c.deproject(u, v, d));
            let (ru, rv) = c.project(&pb).unwrap();
            assert!((ru - u).abs() < 1e-9 && (rv - v).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_reflection_and_bad_focal() {
        let refl = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(CameraModel::extrinsic_from_matrix(Vector3::zeros(), refl).is_err());
        assert!(CameraModel::new(0.0, 1.0, 0.0, 0.0, Isometry3::identity()).is_err());
    }
}
