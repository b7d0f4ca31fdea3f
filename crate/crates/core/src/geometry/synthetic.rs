//! Analytic surfaces rendered into depth images by ray casting.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{CameraModel, DepthImage, GeometryError, Result};

/// Analytic surface in the base frame, z up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// Horizontal plane at height `z`.
    Plane { z: f64 },
    /// Table plane at `base_z` with a spherical cap of the given sphere
    /// radius rising `cap_height` above it, centred at `(cx, cy)`.
    SphereCap {
        cx: f64,
        cy: f64,
        base_z: f64,
        radius: f64,
        cap_height: f64,
    },
    /// `z = base_z + amplitude * sin(2 pi x / wavelength)`.
    Wave {
        base_z: f64,
        amplitude: f64,
        wavelength: f64,
    },
}

impl Primitive {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Primitive::Plane { z } => z.is_finite(),
            Primitive::SphereCap {
                cx,
                cy,
                base_z,
                radius,
                cap_height,
            } => {
                [cx, cy, base_z].iter().all(|v| v.is_finite())
                    && radius > 0.0
                    && cap_height > 0.0
                    && cap_height <= radius
            }
            Primitive::Wave {
                base_z,
                amplitude,
                wavelength,
            } => {
                base_z.is_finite() && amplitude >= 0.0 && amplitude.is_finite() && wavelength > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidInput(format!(
                "invalid surface primitive {self:?}"
            )))
        }
    }

    pub fn sphere_center(&self) -> Option<Vector3<f64>> {
        match *self {
            Primitive::SphereCap {
                cx,
                cy,
                base_z,
                radius,
                cap_height,
            } => Some(Vector3::new(cx, cy, base_z + cap_height - radius)),
            _ => None,
        }
    }

    /// Surface height above `(x, y)`.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        match *self {
            Primitive::Plane { z } => z,
            Primitive::SphereCap { base_z, radius, .. } => {
                let c = self.sphere_center().unwrap_or_default();
                let r2 = (x - c.x).powi(2) + (y - c.y).powi(2);
                if r2 >= radius * radius {
                    return base_z;
                }
                (c.z + (radius * radius - r2).sqrt()).max(base_z)
            }
            Primitive::Wave {
                base_z,
                amplitude,
                wavelength,
            } => base_z + amplitude * (std::f64::consts::TAU * x / wavelength).sin(),
        }
    }

    /// Upward unit normal at `(x, y)`.
    pub fn normal(&self, x: f64, y: f64) -> Vector3<f64> {
        match *self {
            Primitive::Plane { .. } => Vector3::z(),
            Primitive::SphereCap { base_z, .. } => {
                let c = self.sphere_center().unwrap_or_default();
                let z = self.height(x, y);
                if z <= base_z {
                    return Vector3::z();
                }
                (Vector3::new(x, y, z) - c).normalize()
            }
            Primitive::Wave {
                amplitude,
                wavelength,
                ..
            } => {
                let k = std::f64::consts::TAU / wavelength;
                let slope = amplitude * k * (k * x).cos();
                Vector3::new(-slope, 0.0, 1.0).normalize()
            }
        }
    }

    /// Ray parameter of the first surface hit along `origin + s * dir`.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let plane_hit = |z: f64| -> Option<f64> {
            if dir.z.abs() < 1e-15 {
                return None;
            }
            let s = (z - origin.z) / dir.z;
            (s > 0.0).then_some(s)
        };
        match *self {
            Primitive::Plane { z } => plane_hit(z),
            Primitive::SphereCap { base_z, radius, .. } => {
                let c = self.sphere_center()?;
                let oc = origin - c;
                let b = oc.dot(dir);
                let disc = b * b - (oc.norm_squared() - radius * radius) * dir.norm_squared();
                if disc >= 0.0 {
                    let s = (-b - disc.sqrt()) / dir.norm_squared();
                    if s > 0.0 && origin.z + s * dir.z >= base_z {
                        return Some(s);
                    }
                }
                plane_hit(base_z)
            }
            Primitive::Wave {
                base_z, amplitude, ..
            } => {
                // March to the first sign change, then bisect.
                let above = |s: f64| {
                    let p = origin + dir * s;
                    p.z - self.height(p.x, p.y)
                };
                let top = plane_hit(base_z + amplitude)?.max(0.0);
                let bottom = plane_hit(base_z - amplitude)?;
                let steps = 2000;
                let ds = (bottom - top) / steps as f64;
                let mut s0 = top;
                for k in 1..=steps {
                    let s1 = top + ds * k as f64;
                    if above(s1) <= 0.0 {
                        let (mut lo, mut hi) = (s0, s1);
                        for _ in 0..60 {
                            let mid = 0.5 * (lo + hi);
                            if above(mid) > 0.0 {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                        return Some(0.5 * (lo + hi));
                    }
                    s0 = s1;
                }
                Some(bottom)
            }
        }
    }
}

/// Depth image of the primitive seen by `camera`; pixels whose ray misses are NaN.
pub fn render_depth(
    primitive: &Primitive,
    camera: &CameraModel,
    width: usize,
    height: usize,
) -> Result<DepthImage> {
    primitive.validate()?;
    let origin = camera.origin_in_base();
    let mut depth = Vec::with_capacity(width * height);
    for v in 0..height {
        for u in 0..width {
            let ray_sensor = camera.deproject(u as f64, v as f64, 1.0);
            let dir = camera.sensor_to_base_vector(&ray_sensor);
            // With a unit-depth ray the hit parameter is the depth itself.
            depth.push(primitive.intersect(&origin, &dir).unwrap_or(f64::NAN));
        }
    }
    DepthImage::new(width, height, depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera() -> CameraModel {
        CameraModel::looking_down(500.0, 500.0, 64.0, 48.0, Vector3::new(0.0, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn plane_depth_is_camera_height() {
        let d = render_depth(&Primitive::Plane { z: 0.2 }, &camera(), 128, 96).unwrap();
        assert!(d.depth.iter().all(|z| (z - 0.8).abs() < 1e-12));
    }

    #[test]
    fn cap_apex_is_closest() {
        let cap = Primitive::SphereCap {
            cx: 0.0,
            cy: 0.0,
            base_z: 0.0,
            radius: 0.2,
            cap_height: 0.05,
        };
        let d = render_depth(&cap, &camera(), 128, 96).unwrap();
        assert!((d.get(64, 48) - 0.95).abs() < 1e-12);
        assert!((cap.height(0.0, 0.0) - 0.05).abs() < 1e-15);
        assert_eq!(cap.height(0.5, 0.0), 0.0);
    }

    #[test]
    fn wave_hit_lies_on_surface() {
        let wave = Primitive::Wave {
            base_z: 0.1,
            amplitude: 0.02,
            wavelength: 0.2,
        };
        let cam = camera();
        let dir = cam.sensor_to_base_vector(&cam.deproject(90.0, 20.0, 1.0));
        let o = cam.origin_in_base();
        let p = o + dir * wave.intersect(&o, &dir).unwrap();
        assert!((p.z - wave.height(p.x, p.y)).abs() < 1e-9);
    }

    #[test]
    fn rejects_cap_taller_than_sphere() {
        let cap = Primitive::SphereCap {
            cx: 0.0,
            cy: 0.0,
            base_z: 0.0,
            radius: 0.1,
            cap_height: 0.2,
        };
        assert!(cap.validate().is_err());
    }
}
