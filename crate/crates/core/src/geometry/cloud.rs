use std::io::{BufRead, Read, Write};

use nalgebra::Vector3;

use super::{CameraModel, GeometryError, Result};

/// Row-major grid of sensor-frame points with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct OrganizedPointCloud {
    width: usize,
    height: usize,
    points: Vec<Vector3<f64>>,
    valid: Vec<bool>,
}

impl OrganizedPointCloud {
    pub fn new(
        width: usize,
        height: usize,
        points: Vec<Vector3<f64>>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if points.len() != width * height || valid.len() != width * height {
            return Err(GeometryError::InvalidInput(format!(
                "expected {} cells, got {} points and {} mask entries",
                width * height,
                points.len(),
                valid.len()
            )));
        }
        if let Some(i) = points
            .iter()
            .zip(&valid)
            .position(|(p, &ok)| ok && !p.iter().all(|c| c.is_finite()))
        {
            return Err(GeometryError::InvalidInput(format!(
                "valid point {i} is not finite"
            )));
        }
        Ok(Self {
            width,
            height,
            points,
            valid,
        })
    }

    /// Builds a cloud from points, treating any non-finite point as invalid.
    pub fn from_points(width: usize, height: usize, points: Vec<Vector3<f64>>) -> Result<Self> {
        let valid = points
            .iter()
            .map(|p| p.iter().all(|c| c.is_finite()))
            .collect();
        Self::new(width, height, points, valid)
    }

    /// Back-projects a depth image through the camera intrinsics (sensor frame).
    pub fn from_depth(depth: &DepthImage, camera: &CameraModel) -> Self {
        let mut points = Vec::with_capacity(depth.width * depth.height);
        let mut valid = Vec::with_capacity(depth.width * depth.height);
        for v in 0..depth.height {
            for u in 0..depth.width {
                let d = depth.get(u, v);
                if d > 0.0 && d.is_finite() {
                    points.push(camera.deproject(u as f64, v as f64, d));
                    valid.push(true);
                } else {
                    points.push(Vector3::repeat(f64::NAN));
                    valid.push(false);
                }
            }
        }
        Self {
            width: depth.width,
            height: depth.height,
            points,
            valid,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    #[inline]
    pub fn point(&self, u: usize, v: usize) -> &Vector3<f64> {
        &self.points[self.index(u, v)]
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[self.index(u, v)]
    }

    pub fn get(&self, u: usize, v: usize) -> Option<&Vector3<f64>> {
        if u < self.width && v < self.height && self.is_valid(u, v) {
            Some(self.point(u, v))
        } else {
            None
        }
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.valid.is_empty() {
            return 0.0;
        }
        self.valid.iter().filter(|&&b| b).count() as f64 / self.valid.len() as f64
    }

    /// Nearest valid cell to `(u, v)` within `radius` pixels (Euclidean), ties
    /// broken by scan order.
    pub fn nearest_valid(&self, u: usize, v: usize, radius: usize) -> Option<(usize, usize)> {
        if u < self.width && v < self.height && self.is_valid(u, v) {
            return Some((u, v));
        }
        let r = radius as i64;
        let mut best: Option<(i64, (usize, usize))> = None;
        for dv in -r..=r {
            for du in -r..=r {
                let d2 = du * du + dv * dv;
                if d2 > r * r {
                    continue;
                }
                let (uu, vv) = (u as i64 + du, v as i64 + dv);
                if uu < 0 || vv < 0 || uu >= self.width as i64 || vv >= self.height as i64 {
                    continue;
                }
                let (uu, vv) = (uu as usize, vv as usize);
                if self.is_valid(uu, vv) && best.is_none_or(|(bd, _)| d2 < bd) {
                    best = Some((d2, (uu, vv)));
                }
            }
        }
        best.map(|(_, c)| c)
    }

    /// Parses the whitespace-separated XYZ format: a `width height` header
    /// followed by `width*height` rows of `x y z` (non-finite rows are invalid).
    pub fn read_xyz<R: BufRead>(reader: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("");
            tokens.extend(line.split_whitespace().map(str::to_owned));
        }
        let mut it = tokens.into_iter();
        let mut next_usize = |what: &str| -> Result<usize> {
            it.next()
                .ok_or_else(|| GeometryError::Format(format!("missing {what}")))?
                .parse::<usize>()
                .map_err(|e| GeometryError::Format(format!("bad {what}: {e}")))
        };
        let width = next_usize("width")?;
        let height = next_usize("height")?;
        let rest: Vec<String> = it.collect();
        if rest.len() != 3 * width * height {
            return Err(GeometryError::Format(format!(
                "expected {} coordinates, found {}",
                3 * width * height,
                rest.len()
            )));
        }
        let mut points = Vec::with_capacity(width * height);
        for chunk in rest.chunks(3) {
            let mut c = [0.0; 3];
            for (k, tok) in chunk.iter().enumerate() {
                c[k] = tok
                    .parse::<f64>()
                    .map_err(|e| GeometryError::Format(format!("bad coordinate {tok:?}: {e}")))?;
            }
            points.push(Vector3::new(c[0], c[1], c[2]));
        }
        Self::from_points(width, height, points)
    }

    pub fn write_xyz<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.width, self.height)?;
        for (p, &ok) in self.points.iter().zip(&self.valid) {
            if ok {
                writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
            } else {
                writeln!(w, "nan nan nan")?;
            }
        }
        Ok(())
    }
}

/// Single-channel depth image in meters; zero or non-finite means "no return".
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, depth: Vec<f64>) -> Result<Self> {
        if depth.len() != width * height {
            return Err(GeometryError::InvalidInput(
                "depth buffer size mismatch".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            depth,
        })
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    /// Rounds every depth to the nearest multiple of `step` meters.
    pub fn quantized(&self, step: f64) -> Self {
        let depth = self
            .depth
            .iter()
            .map(|&d| {
                if d > 0.0 && d.is_finite() {
                    (d / step).round() * step
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            width: self.width,
            height: self.height,
            depth,
        }
    }
}

/// Reads a 16-bit single-channel PNG holding depth in millimeters.
pub fn read_depth_png<R: Read>(mut reader: R) -> Result<DepthImage> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| GeometryError::Format(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(GeometryError::Format(format!(
            "depth PNG must be 16-bit grayscale, got {:?} {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(width * height * 2)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| GeometryError::Format(e.to_string()))?;
    let bytes = &buf[..frame.buffer_size()];
    let depth = bytes
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 * 1e-3)
        .collect();
    DepthImage::new(width, height, depth)
}

/// Writes depth (meters) as a 16-bit millimeter PNG; invalid pixels become 0.
pub fn write_depth_png<W: Write>(depth: &DepthImage, writer: W) -> Result<()> {
    let mut enc = png::Encoder::new(writer, depth.width as u32, depth.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut w = enc
        .write_header()
        .map_err(|e| GeometryError::Format(e.to_string()))?;
    let mut data = Vec::with_capacity(depth.depth.len() * 2);
    for &d in &depth.depth {
        let mm = if d > 0.0 && d.is_finite() {
            (d * 1e3).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        data.extend_from_slice(&mm.to_be_bytes());
    }
    w.write_image_data(&data)
        .map_err(|e| GeometryError::Format(e.to_string()))?;
    w.finish()
        .map_err(|e| GeometryError::Format(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_size_mismatch_and_nonfinite_valid_points() {
        assert!(OrganizedPointCloud::new(2, 2, vec![Vector3::zeros(); 3], vec![true; 4]).is_err());
        let mut pts = vec![Vector3::zeros(); 4];
        pts[2].x = f64::NAN;
        assert!(OrganizedPointCloud::new(2, 2, pts.clone(), vec![true; 4]).is_err());
        let c = OrganizedPointCloud::from_points(2, 2, pts).unwrap();
        assert!(!c.is_valid(0, 1));
        assert_eq!(c.valid_fraction(), 0.75);
    }

    #[test]
    fn xyz_round_trip() {
        let pts = vec![
            Vector3::new(0.1, 0.2, 1.0),
            Vector3::repeat(f64::NAN),
            Vector3::new(-0.3, 0.25, 0.875),
            Vector3::new(1e-3, -2e-3, 2.5),
        ];
        let c = OrganizedPointCloud::from_points(2, 2, pts).unwrap();
        let mut buf = Vec::new();
        c.write_xyz(&mut buf).unwrap();
        let back = OrganizedPointCloud::read_xyz(&buf[..]).unwrap();
        assert_eq!(back.valid_mask(), c.valid_mask());
        assert_eq!(back.point(0, 0), c.point(0, 0));
        assert_eq!(back.point(1, 1), c.point(1, 1));
        assert!(OrganizedPointCloud::read_xyz(&b"2 2\n0 0 1\n"[..]).is_err());
    }

    #[test]
    fn depth_png_round_trip_in_millimeters() {
        let d = DepthImage::new(3, 2, vec![1.0, 0.0, 0.5006, 2.0, 1.234, 0.3]).unwrap();
        let mut buf = Vec::new();
        write_depth_png(&d, &mut buf).unwrap();
        let back = read_depth_png(&buf[..]).unwrap();
        assert_eq!((back.width, back.height), (3, 2));
        let expected = [1.0, 0.0, 0.501, 2.0, 1.234, 0.3];
        for (a, b) in back.depth.iter().zip(expected) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn nearest_valid_respects_radius() {
        let mut pts = vec![Vector3::repeat(f64::NAN); 49];
        pts[3 * 7 + 6] = Vector3::new(0.0, 0.0, 1.0);
        let c = OrganizedPointCloud::from_points(7, 7, pts).unwrap();
        assert_eq!(c.nearest_valid(3, 3, 3), Some((6, 3)));
        assert_eq!(c.nearest_valid(2, 3, 3), None);
    }
}
