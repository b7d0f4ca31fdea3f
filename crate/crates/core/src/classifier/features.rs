use std::f64::consts::FRAC_PI_4;
use std::io::{Read, Write};

use super::{ClassifierError, FeatureVector, Result};

pub const INTENSITY_BINS: usize = 32;
pub const GRADIENT_BINS: usize = 8;
pub const TOY_DIM: usize = INTENSITY_BINS + GRADIENT_BINS;

/// Row-major 8-bit grayscale patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(ClassifierError::InvalidInput(format!(
                "{width}x{height} patch with {} pixels",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let pixels = (0..height)
            .flat_map(|v| (0..width).map(move |u| (u, v)))
            .map(|(u, v)| f(u, v))
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.pixels[v * self.width + u]
    }

    /// Rotates the content a quarter turn counter-clockwise as displayed.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.height, self.width);
        let pixels = (0..h)
            .flat_map(|v| (0..w).map(move |u| (u, v)))
            .map(|(u, v)| self.get(self.width - 1 - v, u))
            .collect();
        Self {
            width: w,
            height: h,
            pixels,
        }
    }
}

/// Stand-in descriptor: a 32-bin intensity histogram followed by an 8-bin
/// gradient-orientation histogram. Each part is normalized to unit sum, then
/// the concatenation to unit length.
///
/// Gradients are central differences on interior pixels with image y pointing
/// down; orientation `atan2(gy, gx)` is weighted by magnitude into bins
/// centred on multiples of 45°.
pub fn toy_extract(patch: &GrayImage) -> FeatureVector {
    let mut hist = [0.0f64; TOY_DIM];
    for &p in patch.pixels() {
        hist[p as usize * INTENSITY_BINS / 256] += 1.0;
    }
    let total = patch.pixels().len() as f64;
    hist[..INTENSITY_BINS].iter_mut().for_each(|h| *h /= total);

    let (w, h) = (patch.width(), patch.height());
    let mut grad = [0.0f64; GRADIENT_BINS];
    for v in 1..h.saturating_sub(1) {
        for u in 1..w.saturating_sub(1) {
            let gx = patch.get(u + 1, v) as f64 - patch.get(u - 1, v) as f64;
            let gy = patch.get(u, v + 1) as f64 - patch.get(u, v - 1) as f64;
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let bin = (gy.atan2(gx) / FRAC_PI_4)
                .round()
                .rem_euclid(GRADIENT_BINS as f64) as usize;
            grad[bin % GRADIENT_BINS] += mag;
        }
    }
    let gsum: f64 = grad.iter().sum();
    if gsum > 0.0 {
        for (dst, g) in hist[INTENSITY_BINS..].iter_mut().zip(grad) {
            *dst = g / gsum;
        }
    }
    let norm = hist.iter().map(|x| x * x).sum::<f64>().sqrt();
    FeatureVector::new(hist.iter().map(|x| x / norm).collect())
        .expect("histogram is finite and non-empty")
}

fn format_err(e: impl std::fmt::Display) -> ClassifierError {
    ClassifierError::Format(e.to_string())
}

/// Decodes an 8-bit PNG patch. Colour images are converted with integer
/// BT.601 luma; alpha is ignored.
pub fn read_gray_png<R: Read>(mut reader: R) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(format_err)?;
    let mut buf = vec![
        0;
        reader
            .output_buffer_size()
            .ok_or_else(|| format_err("image too large"))?
    ];
    let frame = reader.next_frame(&mut buf).map_err(format_err)?;
    if frame.bit_depth != png::BitDepth::Eight {
        return Err(format_err(format!(
            "patch must be 8-bit, got {:?}",
            frame.bit_depth
        )));
    }
    let data = &buf[..frame.buffer_size()];
    let luma = |r: u8, g: u8, b: u8| {
        ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
    };
    let pixels: Vec<u8> = match frame.color_type {
        png::ColorType::Grayscale => data.to_vec(),
        png::ColorType::GrayscaleAlpha => data.chunks_exact(2).map(|c| c[0]).collect(),
        png::ColorType::Rgb => data
            .chunks_exact(3)
            .map(|c| luma(c[0], c[1], c[2]))
            .collect(),
        png::ColorType::Rgba => data
            .chunks_exact(4)
            .map(|c| luma(c[0], c[1], c[2]))
            .collect(),
        other => return Err(format_err(format!("unsupported colour type {other:?}"))),
    };
    GrayImage::new(frame.width as usize, frame.height as usize, pixels).map_err(format_err)
}

pub fn write_gray_png<W: Write>(patch: &GrayImage, writer: W) -> Result<()> {
    let mut enc = png::Encoder::new(writer, patch.width() as u32, patch.height() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(format_err)?;
    w.write_image_data(patch.pixels()).map_err(format_err)?;
    w.finish().map_err(format_err)
}
