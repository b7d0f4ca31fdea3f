use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::{GeometryError, OrganizedPointCloud, Result};

/// Default smoothing half-width for integral-image normals, in pixels.
pub const DEFAULT_HALF_WINDOW: usize = 5;
/// Default neighborhood radius for plane-fit normals, in meters.
pub const DEFAULT_PCA_RADIUS: f64 = 0.02;

/// Per-pixel unit normals aligned with a cloud grid, in the sensor frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    normals: Vec<Vector3<f64>>,
    valid: Vec<bool>,
}

impl NormalMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, u: usize, v: usize) -> Option<&Vector3<f64>> {
        if u >= self.width || v >= self.height {
            return None;
        }
        let i = v * self.width + u;
        self.valid[i].then(|| &self.normals[i])
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    /// Nearest valid normal within `radius` pixels of `(u, v)`.
    pub fn nearest(&self, u: usize, v: usize, radius: usize) -> Option<Vector3<f64>> {
        let r = radius as i64;
        let mut best: Option<(i64, Vector3<f64>)> = None;
        for dv in -r..=r {
            for du in -r..=r {
                let d2 = du * du + dv * dv;
                if d2 > r * r {
                    continue;
                }
                let (uu, vv) = (u as i64 + du, v as i64 + dv);
                if uu < 0 || vv < 0 {
                    continue;
                }
                if let Some(n) = self.get(uu as usize, vv as usize) {
                    if best.is_none_or(|(bd, _)| d2 < bd) {
                        best = Some((d2, *n));
                    }
                }
            }
        }
        best.map(|(_, n)| n)
    }
}

/// Summed-area table over a 3-vector channel.
struct Integral3 {
    stride: usize,
    data: Vec<Vector3<f64>>,
}

impl Integral3 {
    fn build(width: usize, height: usize, at: impl Fn(usize, usize) -> Vector3<f64>) -> Self {
        let stride = width + 1;
        let mut data = vec![Vector3::zeros(); stride * (height + 1)];
        for v in 0..height {
            let mut row = Vector3::zeros();
            for u in 0..width {
                row += at(u, v);
                data[(v + 1) * stride + u + 1] = data[v * stride + u + 1] + row;
            }
        }
        Self { stride, data }
    }

    /// Sum over the inclusive rectangle `[u0, u1] x [v0, v1]`.
    fn sum(&self, u0: usize, v0: usize, u1: usize, v1: usize) -> Vector3<f64> {
        let s = self.stride;
        self.data[(v1 + 1) * s + u1 + 1] - self.data[v0 * s + u1 + 1] - self.data[(v1 + 1) * s + u0]
            + self.data[v0 * s + u0]
    }
}

/// Average-3D-gradient normals: horizontal and vertical central-difference
/// tangents are box-averaged through integral images and crossed.
///
/// A normal is valid only when every point in the `(2*half_window+3)^2` block
/// that feeds the two tangent windows is valid; image borders are therefore
/// always invalid.
pub fn estimate_normals_integral(
    cloud: &OrganizedPointCloud,
    half_window: usize,
) -> Result<NormalMap> {
    if cloud.is_empty() {
        return Err(GeometryError::InvalidInput("point cloud is empty".into()));
    }
    if half_window < 1 {
        return Err(GeometryError::InvalidInput(
            "half_window must be at least 1".into(),
        ));
    }
    let (w, h) = (cloud.width(), cloud.height());
    let horiz = |u: usize, v: usize| -> Vector3<f64> {
        if u == 0 || u + 1 >= w || !cloud.is_valid(u - 1, v) || !cloud.is_valid(u + 1, v) {
            return Vector3::zeros();
        }
        cloud.point(u + 1, v) - cloud.point(u - 1, v)
    };
    let vert = |u: usize, v: usize| -> Vector3<f64> {
        if v == 0 || v + 1 >= h || !cloud.is_valid(u, v - 1) || !cloud.is_valid(u, v + 1) {
            return Vector3::zeros();
        }
        cloud.point(u, v + 1) - cloud.point(u, v - 1)
    };
    let ih = Integral3::build(w, h, horiz);
    let iv = Integral3::build(w, h, vert);
    let invalid = Integral3::build(w, h, |u, v| {
        Vector3::new(if cloud.is_valid(u, v) { 0.0 } else { 1.0 }, 0.0, 0.0)
    });

    let reach = half_window + 1;
    let mut normals = vec![Vector3::zeros(); w * h];
    let mut valid = vec![false; w * h];
    if w <= 2 * reach || h <= 2 * reach {
        return Ok(NormalMap {
            width: w,
            height: h,
            normals,
            valid,
        });
    }
    for v in reach..h - reach {
        for u in reach..w - reach {
            if invalid.sum(u - reach, v - reach, u + reach, v + reach).x != 0.0 {
                continue;
            }
            let (u0, v0, u1, v1) = (
                u - half_window,
                v - half_window,
                u + half_window,
                v + half_window,
            );
            let th = ih.sum(u0, v0, u1, v1);
            let tv = iv.sum(u0, v0, u1, v1);
            if let Some(n) = oriented_cross(&th, &tv, cloud.point(u, v)) {
                let i = v * w + u;
                normals[i] = n;
                valid[i] = true;
            }
        }
    }
    Ok(NormalMap {
        width: w,
        height: h,
        normals,
        valid,
    })
}

/// Normalized `a x b`, flipped to face the sensor origin as seen from `p`.
pub(crate) fn oriented_cross(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    p: &Vector3<f64>,
) -> Option<Vector3<f64>> {
    let c = a.cross(b);
    let norm = c.norm();
    if !(norm > 1e-300) || !norm.is_finite() {
        return None;
    }
    Some(orient_toward_sensor(c / norm, p))
}

#[inline]
pub(crate) fn orient_toward_sensor(n: Vector3<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    if n.dot(&(-p)) < 0.0 {
        -n
    } else {
        n
    }
}

/// Plane-fit normal: eigenvector of the smallest eigenvalue of the covariance
/// of all valid points within `radius` of the target.
pub fn estimate_normal_pca(
    cloud: &OrganizedPointCloud,
    target: (usize, usize),
    radius: f64,
) -> Result<Vector3<f64>> {
    let (tu, tv) = target;
    let center = *cloud.get(tu, tv).ok_or_else(|| {
        GeometryError::InvalidInput(format!("target pixel ({tu}, {tv}) is not a valid point"))
    })?;
    if !(radius > 0.0) {
        return Err(GeometryError::InvalidInput(
            "radius must be positive".into(),
        ));
    }

    // Grid-window prefilter sized from the local pixel footprint.
    let mut spacing = f64::INFINITY;
    for (du, dv) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
        let (u, v) = (tu as i64 + du, tv as i64 + dv);
        if u >= 0 && v >= 0 {
            if let Some(p) = cloud.get(u as usize, v as usize) {
                spacing = spacing.min((p - center).norm());
            }
        }
    }
    let half = if spacing.is_finite() && spacing > 0.0 {
        ((radius / spacing).ceil() as usize + 1).clamp(1, 64)
    } else {
        1
    };

    let r2 = radius * radius;
    let mut neighbors = Vec::new();
    let (u0, u1) = (tu.saturating_sub(half), (tu + half).min(cloud.width() - 1));
    let (v0, v1) = (tv.saturating_sub(half), (tv + half).min(cloud.height() - 1));
    for v in v0..=v1 {
        for u in u0..=u1 {
            if let Some(p) = cloud.get(u, v) {
                if (p - center).norm_squared() <= r2 {
                    neighbors.push(*p);
                }
            }
        }
    }
    if neighbors.len() < 3 {
        return Err(GeometryError::DegenerateNeighborhood(format!(
            "{} points within {radius} m",
            neighbors.len()
        )));
    }

    let mean = neighbors.iter().sum::<Vector3<f64>>() / neighbors.len() as f64;
    let cov = neighbors.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    }) / neighbors.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l1, l2) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(l2 > 0.0) || l1 <= 1e-10 * l2 {
        return Err(GeometryError::DegenerateNeighborhood(
            "neighbors are collinear".into(),
        ));
    }
    let n = eig.eigenvectors.column(order[0]).normalize();
    Ok(orient_toward_sensor(n, &center))
}
