//! Sensed scene: what the camera reports and what the arm actually touches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use surfteach_core::classifier::GrayImage;
use surfteach_core::contact::{surface_from_cloud, SurfaceModel};
use surfteach_core::geometry::{
    estimate_normals_integral, render_depth, CameraModel, DepthImage, NormalMap, OrganizedPointCloud,
};

use crate::error::Result;
use crate::scenario::{Appearance, Scenario, SurfaceSource};

/// Ground-truth object placement in the image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    pub bbox: [usize; 4],
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub camera: CameraModel,
    /// Noise-free depth, meters.
    pub depth: DepthImage,
    /// Quantized cloud as perceived, sensor frame.
    pub cloud: OrganizedPointCloud,
    pub normals: NormalMap,
    /// Contact surface used by the simulator.
    pub surface: SurfaceModel,
    /// Grayscale frame: shaded depth with object appearances pasted in.
    pub image: GrayImage,
    pub objects: Vec<SceneObject>,
    appearances: Vec<Appearance>,
}

/// Maps valid depth to gray, near bright, over the observed depth range.
fn shade(depth: &DepthImage) -> GrayImage {
    let valid = depth.depth.iter().copied().filter(|d| *d > 0.0 && d.is_finite());
    let (near, far) = valid.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| (a.min(d), b.max(d)));
    let span = (far - near).max(1e-6);
    GrayImage::from_fn(depth.width, depth.height, |u, v| {
        let d = depth.get(u, v);
        if d > 0.0 && d.is_finite() {
            (60.0 + 180.0 * (far - d) / span).round() as u8
        } else {
            0
        }
    })
    .expect("depth image is non-empty")
}

impl Scene {
    pub fn build(scenario: &Scenario) -> Result<Self> {
        let cam_spec = &scenario.camera;
        let camera = cam_spec.model()?;
        let (depth, surface) = match scenario.surface.primitive() {
            Some(p) => {
                let depth = render_depth(&p, &camera, cam_spec.width, cam_spec.height)?;
                let ws = &scenario.workspace;
                let surface = SurfaceModel::from_primitive(
                    &p,
                    (ws.x_range[0], ws.x_range[1]),
                    (ws.y_range[0], ws.y_range[1]),
                    ws.resolution,
                    scenario.contact,
                )?;
                (depth, surface)
            }
            None => {
                debug_assert!(matches!(scenario.surface, SurfaceSource::DepthImage { .. }));
                let depth = scenario.depth_image()?;
                let cloud = OrganizedPointCloud::from_depth(&depth, &camera);
                let surface = surface_from_cloud(&cloud, &camera, scenario.contact)?;
                (depth, surface)
            }
        };
        let sensed = if cam_spec.quantization > 0.0 { depth.quantized(cam_spec.quantization) } else { depth.clone() };
        let cloud = OrganizedPointCloud::from_depth(&sensed, &camera);
        let normals = estimate_normals_integral(&cloud, cam_spec.half_window)?;

        let appearances = (0..scenario.objects.len()).map(|i| scenario.appearance(i)).collect::<std::result::Result<Vec<_>, _>>()?;
        let mut pixels = shade(&depth).pixels().to_vec();
        let w = depth.width;
        for (o, a) in scenario.objects.iter().zip(&appearances) {
            let (ow, oh) = o.size();
            let patch = a.render(ow, oh);
            for v in 0..oh {
                for u in 0..ow {
                    pixels[(o.bbox[1] + v) * w + o.bbox[0] + u] = patch.get(u, v);
                }
            }
        }
        let noise = cam_spec.image_noise as i32;
        if noise > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x5CE7E);
            for p in &mut pixels {
                *p = (*p as i32 + rng.random_range(-noise..=noise)).clamp(0, 255) as u8;
            }
        }
        let image = GrayImage::new(w, depth.height, pixels)?;
        let objects = scenario.objects.iter().map(|o| SceneObject { name: o.name.clone(), bbox: o.bbox }).collect();
        Ok(Self { camera, depth, cloud, normals, surface, image, objects, appearances })
    }

    pub fn crop(&self, bbox: [usize; 4]) -> GrayImage {
        let [u0, v0, u1, v1] = bbox;
        GrayImage::from_fn(u1 - u0, v1 - v0, |u, v| self.image.get(u0 + u, v0 + v)).expect("validated box")
    }

    /// Demonstration views of a scene object for teaching.
    pub fn demonstrations(&self, index: usize, count: usize, noise: u8, seed: u64) -> Vec<GrayImage> {
        let (w, h) = {
            let b = self.objects[index].bbox;
            (b[2] - b[0], b[3] - b[1])
        };
        match &self.appearances[index] {
            Appearance::Texture(t) => t.demonstrations(w, h, count, noise, seed),
            Appearance::Image(_) => {
                let base = self.appearances[index].render(w, h);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..count)
                    .map(|_| {
                        let pixels = base
                            .pixels()
                            .iter()
                            .map(|&p| (p as i32 + rng.random_range(-(noise as i32)..=noise as i32)).clamp(0, 255) as u8)
                            .collect();
                        GrayImage::new(w, h, pixels).expect("same size")
                    })
                    .collect()
            }
        }
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.name == name)
    }

    /// Pixel under a table point `(x, y)` on the contact surface.
    pub fn pixel_of(&self, x: f64, y: f64) -> Option<[f64; 2]> {
        let z = self.surface.field.height(x, y).ok()?;
        let (u, v) = self.camera.project(&nalgebra::Vector3::new(x, y, z))?;
        Some([u, v])
    }
}
