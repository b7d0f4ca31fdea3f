//! Procedural grayscale textures standing in for object appearance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use surfteach_core::classifier::GrayImage;

fn default_lo() -> u8 {
    40
}

fn default_hi() -> u8 {
    210
}

/// Analytic texture; `lo`/`hi` are the two extreme gray levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Texture {
    Stripes {
        period: f64,
        #[serde(default)]
        angle_deg: f64,
        #[serde(default = "default_lo")]
        lo: u8,
        #[serde(default = "default_hi")]
        hi: u8,
    },
    Checker {
        cell: f64,
        #[serde(default = "default_lo")]
        lo: u8,
        #[serde(default = "default_hi")]
        hi: u8,
    },
    Dots {
        spacing: f64,
        radius: f64,
        #[serde(default = "default_lo")]
        lo: u8,
        #[serde(default = "default_hi")]
        hi: u8,
    },
    Rings {
        period: f64,
        #[serde(default = "default_lo")]
        lo: u8,
        #[serde(default = "default_hi")]
        hi: u8,
    },
    Ramp {
        #[serde(default)]
        angle_deg: f64,
        #[serde(default = "default_lo")]
        lo: u8,
        #[serde(default = "default_hi")]
        hi: u8,
    },
    /// Value noise on a `cell`-pixel lattice, bilinearly interpolated.
    Noise {
        cell: f64,
        seed: u64,
        #[serde(default = "default_lo")]
        lo: u8,
        #[serde(default = "default_hi")]
        hi: u8,
    },
}

/// Soft square wave in [0, 1]: a sinusoid pushed through a steep logistic so
/// edges stay a pixel or two wide.
fn soft_square(phase: f64) -> f64 {
    let s = (std::f64::consts::TAU * phase).sin();
    1.0 / (1.0 + (-6.0 * s).exp())
}

fn mix(lo: u8, hi: u8, w: f64) -> u8 {
    (lo as f64 + (hi as f64 - lo as f64) * w.clamp(0.0, 1.0)).round() as u8
}

fn lattice(seed: u64, i: i64, j: i64) -> f64 {
    // SplitMix64 on the packed lattice coordinate.
    let mut z = seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

impl Texture {
    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            Texture::Stripes { period, angle_deg, .. } => period > 0.0 && angle_deg.is_finite(),
            Texture::Checker { cell, .. } => cell > 0.0,
            Texture::Dots { spacing, radius, .. } => spacing > 0.0 && radius > 0.0,
            Texture::Rings { period, .. } => period > 0.0,
            Texture::Ramp { angle_deg, .. } => angle_deg.is_finite(),
            Texture::Noise { cell, .. } => cell > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid texture parameters {self:?}"))
        }
    }

    /// Gray level at continuous image coordinates of a `w`×`h` patch.
    pub fn value(&self, x: f64, y: f64, w: f64, h: f64) -> u8 {
        match *self {
            Texture::Stripes { period, angle_deg, lo, hi } => {
                let a = angle_deg.to_radians();
                mix(lo, hi, soft_square((x * a.cos() + y * a.sin()) / period))
            }
            Texture::Checker { cell, lo, hi } => {
                let wx = soft_square(x / (2.0 * cell)) - 0.5;
                let wy = soft_square(y / (2.0 * cell)) - 0.5;
                mix(lo, hi, 0.5 + 2.0 * wx * wy)
            }
            Texture::Dots { spacing, radius, lo, hi } => {
                let dx = (x / spacing).rem_euclid(1.0) - 0.5;
                let dy = (y / spacing).rem_euclid(1.0) - 0.5;
                let d = dx.hypot(dy) * spacing;
                mix(lo, hi, 1.0 / (1.0 + ((d - radius) * 1.5).exp()))
            }
            Texture::Rings { period, lo, hi } => {
                let r = (x - w / 2.0).hypot(y - h / 2.0);
                mix(lo, hi, soft_square(r / period))
            }
            Texture::Ramp { angle_deg, lo, hi } => {
                let a = angle_deg.to_radians();
                let (c, s) = (a.cos(), a.sin());
                let span = (w * c).abs() + (h * s).abs();
                let t = ((x - w / 2.0) * c + (y - h / 2.0) * s) / span.max(1.0) + 0.5;
                mix(lo, hi, t)
            }
            Texture::Noise { cell, seed, lo, hi } => {
                let (gx, gy) = (x / cell, y / cell);
                let (i, j) = (gx.floor() as i64, gy.floor() as i64);
                let (fx, fy) = (gx - i as f64, gy - j as f64);
                let v = lattice(seed, i, j) * (1.0 - fx) * (1.0 - fy)
                    + lattice(seed, i + 1, j) * fx * (1.0 - fy)
                    + lattice(seed, i, j + 1) * (1.0 - fx) * fy
                    + lattice(seed, i + 1, j + 1) * fx * fy;
                mix(lo, hi, v)
            }
        }
    }

    pub fn render(&self, width: usize, height: usize) -> GrayImage {
        self.render_window(width, height, 0.0, 0.0, width as f64, height as f64)
    }

    /// Renders `width`×`height` pixels starting at offset `(ox, oy)` of a
    /// nominal `w`×`h` texture.
    fn render_window(&self, width: usize, height: usize, ox: f64, oy: f64, w: f64, h: f64) -> GrayImage {
        GrayImage::from_fn(width, height, |u, v| self.value(u as f64 + ox, v as f64 + oy, w, h))
            .expect("texture dimensions are non-zero")
    }

    /// Simulated demonstration views: the object shifted by up to a quarter of
    /// its size, its contrast scaled by ±10%, optionally turned half a revolution,
    /// plus uniform sensor noise of ±`noise` gray levels.
    pub fn demonstrations(&self, width: usize, height: usize, count: usize, noise: u8, seed: u64) -> Vec<GrayImage> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (width as f64, height as f64);
        (0..count)
            .map(|_| {
                let ox = rng.random_range(-0.25..=0.25) * w;
                let oy = rng.random_range(-0.25..=0.25) * h;
                let gain = rng.random_range(0.9..=1.1);
                let flip = rng.random_bool(0.5);
                let base = self.render_window(width, height, ox, oy, w, h);
                let mut img = GrayImage::from_fn(width, height, |u, v| {
                    let p = base.get(u, v) as f64;
                    (128.0 + (p - 128.0) * gain).round().clamp(0.0, 255.0) as u8
                })
                .expect("non-empty");
                if flip {
                    img = img.rotate90().rotate90();
                }
                let pixels = img
                    .pixels()
                    .iter()
                    .map(|&p| {
                        let n = if noise == 0 { 0 } else { rng.random_range(-(noise as i32)..=noise as i32) };
                        (p as i32 + n).clamp(0, 255) as u8
                    })
                    .collect();
                GrayImage::new(width, height, pixels).expect("same size")
            })
            .collect()
    }
}
