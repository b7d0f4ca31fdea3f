use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{ContactError, Result};
use crate::geometry::{CameraModel, OrganizedPointCloud, Primitive};

/// Regular grid of surface heights over the base x-y plane, sampled at
/// `(x0 + i * spacing, y0 + j * spacing)` and stored row-major in `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    x0: f64,
    y0: f64,
    spacing: f64,
    nx: usize,
    ny: usize,
    heights: Vec<f64>,
}

impl HeightField {
    pub fn new(
        x0: f64,
        y0: f64,
        spacing: f64,
        nx: usize,
        ny: usize,
        heights: Vec<f64>,
    ) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(ContactError::InvalidSurface(format!(
                "height field needs at least 2x2 samples, got {nx}x{ny}"
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite() && x0.is_finite() && y0.is_finite()) {
            return Err(ContactError::InvalidSurface(format!(
                "bad grid origin or spacing {spacing}"
            )));
        }
        if heights.len() != nx * ny {
            return Err(ContactError::InvalidSurface(format!(
                "expected {} heights, got {}",
                nx * ny,
                heights.len()
            )));
        }
        if !heights.iter().all(|h| h.is_finite()) {
            return Err(ContactError::InvalidSurface(
                "height field contains non-finite values".into(),
            ));
        }
        Ok(Self {
            x0,
            y0,
            spacing,
            nx,
            ny,
            heights,
        })
    }

    /// Samples `f(x, y)` on a grid covering `[x_min, x_max] x [y_min, y_max]`.
    pub fn from_fn(
        (x_min, x_max): (f64, f64),
        (y_min, y_max): (f64, f64),
        spacing: f64,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        if !(spacing > 0.0 && x_max > x_min && y_max > y_min) {
            return Err(ContactError::InvalidInput(
                "empty sampling rectangle".into(),
            ));
        }
        let nx = ((x_max - x_min) / spacing).ceil() as usize + 1;
        let ny = ((y_max - y_min) / spacing).ceil() as usize + 1;
        let mut heights = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                heights.push(f(x_min + i as f64 * spacing, y_min + j as f64 * spacing));
            }
        }
        Self::new(x_min, y_min, spacing, nx, ny, heights)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// `(x_min, x_max, y_min, y_max)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let s = self.spacing;
        (
            self.x0,
            self.x0 + (self.nx - 1) as f64 * s,
            self.y0,
            self.y0 + (self.ny - 1) as f64 * s,
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (a, b, c, d) = self.bounds();
        x >= a && x <= b && y >= c && y <= d
    }

    pub fn sample(&self, i: usize, j: usize) -> f64 {
        self.heights[j * self.nx + i]
    }

    pub fn max_height(&self) -> f64 {
        self.heights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear height at `(x, y)`.
    pub fn height(&self, x: f64, y: f64) -> Result<f64> {
        if !self.contains(x, y) {
            return Err(ContactError::OutOfDomain { x, y });
        }
        let gx = ((x - self.x0) / self.spacing).min((self.nx - 1) as f64);
        let gy = ((y - self.y0) / self.spacing).min((self.ny - 1) as f64);
        let i = (gx.floor() as usize).min(self.nx - 2);
        let j = (gy.floor() as usize).min(self.ny - 2);
        let (fx, fy) = (gx - i as f64, gy - j as f64);
        let h00 = self.sample(i, j);
        let h10 = self.sample(i + 1, j);
        let h01 = self.sample(i, j + 1);
        let h11 = self.sample(i + 1, j + 1);
        Ok(h00 * (1.0 - fx) * (1.0 - fy)
            + h10 * fx * (1.0 - fy)
            + h01 * (1.0 - fx) * fy
            + h11 * fx * fy)
    }

    /// Upward unit normal from central differences one grid step apart
    /// (one-sided at the border).
    pub fn normal(&self, x: f64, y: f64) -> Result<Vector3<f64>> {
        let (a, b, c, d) = self.bounds();
        let h = self.spacing;
        let slope = |lo: f64, hi: f64, f: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
            Ok((f(hi)? - f(lo)?) / (hi - lo))
        };
        let hx = slope((x - h).max(a), (x + h).min(b), &|s| self.height(s, y))?;
        let hy = slope((y - h).max(c), (y + h).min(d), &|s| self.height(x, s))?;
        Ok(Vector3::new(-hx, -hy, 1.0).normalize())
    }
}

/// Penalty contact coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceParams {
    /// Contact stiffness (N/m).
    pub k_c: f64,
    /// Contact damping along the normal (N·s/m).
    pub b_c: f64,
    /// Tangential viscous coefficient (N·s/m).
    pub mu_v: f64,
}

impl Default for SurfaceParams {
    fn default() -> Self {
        Self {
            k_c: 1.0e4,
            b_c: 50.0,
            mu_v: 2.0,
        }
    }
}

impl SurfaceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_c > 0.0 && self.k_c.is_finite()) {
            return Err(ContactError::InvalidInput(format!(
                "k_c must be positive, got {}",
                self.k_c
            )));
        }
        if !(self.b_c >= 0.0 && self.b_c.is_finite() && self.mu_v >= 0.0 && self.mu_v.is_finite()) {
            return Err(ContactError::InvalidInput(
                "b_c and mu_v must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Immutable contact surface: geometry plus penalty coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceModel {
    pub field: HeightField,
    pub params: SurfaceParams,
}

impl SurfaceModel {
    pub fn new(field: HeightField, params: SurfaceParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { field, params })
    }

    /// Samples an analytic primitive directly; for tests and reference runs.
    pub fn from_primitive(
        primitive: &Primitive,
        x_range: (f64, f64),
        y_range: (f64, f64),
        spacing: f64,
        params: SurfaceParams,
    ) -> Result<Self> {
        primitive
            .validate()
            .map_err(|e| ContactError::InvalidInput(e.to_string()))?;
        Self::new(
            HeightField::from_fn(x_range, y_range, spacing, |x, y| primitive.height(x, y))?,
            params,
        )
    }
}

/// Rasterizes a sensed cloud into a base-frame height field. The cell size is
/// the median footprint of neighbouring pixels; empty cells are filled by
/// linear interpolation between the nearest filled cells along their row and
/// column, weighted by the inverse bracket width.
pub fn surface_from_cloud(
    cloud: &OrganizedPointCloud,
    camera: &CameraModel,
    params: SurfaceParams,
) -> Result<SurfaceModel> {
    params.validate()?;
    if cloud.is_empty() || cloud.valid_fraction() < 0.5 {
        return Err(ContactError::InvalidSurface(format!(
            "only {:.1}% of cloud cells are valid",
            100.0 * cloud.valid_fraction()
        )));
    }
    let (w, h) = (cloud.width(), cloud.height());
    let base: Vec<Option<Vector3<f64>>> = (0..h)
        .flat_map(|v| (0..w).map(move |u| (u, v)))
        .map(|(u, v)| cloud.get(u, v).map(|p| camera.sensor_to_base_point(p)))
        .collect();

    let mut steps: Vec<f64> = Vec::new();
    for v in 0..h {
        for u in 0..w.saturating_sub(1) {
            if let (Some(a), Some(b)) = (base[v * w + u], base[v * w + u + 1]) {
                let d = (a.xy() - b.xy()).norm();
                if d > 0.0 {
                    steps.push(d);
                }
            }
        }
    }
    if steps.is_empty() {
        return Err(ContactError::InvalidSurface(
            "cloud has no adjacent valid pixels".into(),
        ));
    }
    steps.sort_by(|a, b| a.total_cmp(b));
    let spacing = steps[steps.len() / 2];

    let pts: Vec<Vector3<f64>> = base.into_iter().flatten().collect();
    let (mut x_min, mut x_max, mut y_min, mut y_max) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in &pts {
        x_min = x_min.min(p.x);
        x_max = x_max.max(p.x);
        y_min = y_min.min(p.y);
        y_max = y_max.max(p.y);
    }
    let nx = ((x_max - x_min) / spacing).round() as usize + 1;
    let ny = ((y_max - y_min) / spacing).round() as usize + 1;
    let mut sum = vec![0.0; nx * ny];
    let mut count = vec![0u32; nx * ny];
    for p in &pts {
        let i = (((p.x - x_min) / spacing).round() as usize).min(nx - 1);
        let j = (((p.y - y_min) / spacing).round() as usize).min(ny - 1);
        sum[j * nx + i] += p.z;
        count[j * nx + i] += 1;
    }
    let cells: Vec<Option<f64>> = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    let heights = fill_holes(&cells, nx, ny);
    SurfaceModel::new(
        HeightField::new(x_min, y_min, spacing, nx, ny, heights)?,
        params,
    )
}

fn fill_holes(cells: &[Option<f64>], nx: usize, ny: usize) -> Vec<f64> {
    let mut acc = vec![(0.0, 0.0); nx * ny];
    let mut bracket = |line: &[usize]| {
        let mut prev: Option<usize> = None;
        for (k, &idx) in line.iter().enumerate() {
            if cells[idx].is_none() {
                continue;
            }
            if let Some(p) = prev {
                let gap = k - p;
                if gap > 1 {
                    let (a, b) = (cells[line[p]].unwrap(), cells[idx].unwrap());
                    for m in p + 1..k {
                        let t = (m - p) as f64 / gap as f64;
                        let weight = 1.0 / gap as f64;
                        let e = &mut acc[line[m]];
                        e.0 += weight * (a + t * (b - a));
                        e.1 += weight;
                    }
                }
            }
            prev = Some(k);
        }
    };
    for j in 0..ny {
        bracket(&(0..nx).map(|i| j * nx + i).collect::<Vec<_>>());
    }
    for i in 0..nx {
        bracket(&(0..ny).map(|j| j * nx + i).collect::<Vec<_>>());
    }
    let mut out: Vec<Option<f64>> = cells
        .iter()
        .zip(&acc)
        .map(|(c, &(s, wsum))| c.or((wsum > 0.0).then(|| s / wsum)))
        .collect();
    // Unbracketed border cells take the mean of their filled neighbours.
    while out.iter().any(Option::is_none) {
        let snapshot = out.clone();
        for j in 0..ny {
            for i in 0..nx {
                if snapshot[j * nx + i].is_some() {
                    continue;
                }
                let mut s = 0.0;
                let mut c = 0;
                for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny {
                        if let Some(v) = snapshot[b as usize * nx + a as usize] {
                            s += v;
                            c += 1;
                        }
                    }
                }
                if c > 0 {
                    out[j * nx + i] = Some(s / c as f64);
                }
            }
        }
    }
    out.into_iter().map(|v| v.unwrap_or(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_reproduces_planes_exactly() {
        let f = HeightField::from_fn((0.0, 1.0), (-0.5, 0.5), 0.1, |x, y| 0.2 + 0.3 * x - 0.1 * y)
            .unwrap();
        for &(x, y) in &[(0.0, -0.5), (0.33, 0.12), (1.0, 0.5), (0.77, -0.41)] {
            assert!((f.height(x, y).unwrap() - (0.2 + 0.3 * x - 0.1 * y)).abs() < 1e-12);
        }
        let n = f.normal(0.5, 0.0).unwrap();
        assert!((n - Vector3::new(-0.3, 0.1, 1.0).normalize()).norm() < 1e-12);
        assert!(matches!(
            f.height(1.01, 0.0),
            Err(ContactError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn holes_are_interpolated_along_rows_and_columns() {
        let mut cells: Vec<Option<f64>> = (0..25).map(|k| Some((k % 5) as f64)).collect();
        cells[12] = None;
        cells[0] = None;
        let out = fill_holes(&cells, 5, 5);
        assert!((out[12] - 2.0).abs() < 1e-12);
        assert!((out[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        let bad = SurfaceParams {
            k_c: 0.0,
            ..Default::default()
        };
        let f = HeightField::from_fn((0.0, 1.0), (0.0, 1.0), 0.5, |_, _| 0.0).unwrap();
        assert!(SurfaceModel::new(f, bad).is_err());
    }
}
