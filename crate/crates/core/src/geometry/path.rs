use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{CameraModel, GeometryError, NormalMap, OrganizedPointCloud, Result};

/// Depth holes up to this many pixels away are bridged by the nearest valid cell.
pub const HOLE_BRIDGE_RADIUS: usize = 3;
/// Search radius for a usable normal around a stroke pixel.
const NORMAL_SEARCH_RADIUS: usize = 8;
/// Default spacing between retained path points, in meters.
pub const DEFAULT_MIN_SPACING: f64 = 0.01;

/// An ordered pixel trace drawn on the image stream.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Stroke2D {
    pub pixels: Vec<[f64; 2]>,
}

impl Stroke2D {
    pub fn new(pixels: Vec<[f64; 2]>) -> Self {
        Self { pixels }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Checks that every pixel is finite and inside a `width x height` image.
    pub fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        for &[u, v] in &self.pixels {
            if !(u.is_finite() && v.is_finite())
                || u < 0.0
                || v < 0.0
                || u > (width - 1) as f64
                || v > (height - 1) as f64
            {
                return Err(GeometryError::InvalidInput(format!(
                    "pixel ({u}, {v}) outside {width}x{height} image"
                )));
            }
        }
        Ok(())
    }
}

/// Surface path in the base frame with one unit normal per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path3D {
    points: Vec<Vector3<f64>>,
    normals: Vec<Vector3<f64>>,
}

impl Path3D {
    pub fn new(points: Vec<Vector3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(GeometryError::InvalidInput(
                "points and normals differ in length".into(),
            ));
        }
        if points.is_empty() {
            return Err(GeometryError::InvalidInput("path is empty".into()));
        }
        for (i, n) in normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > 1e-6 {
                return Err(GeometryError::InvalidInput(format!(
                    "normal {i} is not unit length"
                )));
            }
        }
        if let Some(i) = points.windows(2).position(|w| w[0] == w[1]) {
            return Err(GeometryError::InvalidInput(format!(
                "points {i} and {} coincide",
                i + 1
            )));
        }
        Ok(Self { points, normals })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Polyline length in meters.
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// Maps stroke pixels to base-frame surface points with their normals.
///
/// Depth is bilinearly interpolated when the four surrounding cells are valid;
/// otherwise the nearest valid cell within [`HOLE_BRIDGE_RADIUS`] stands in.
/// Consecutive pixels that resolve to the same 3D point are merged.
pub fn project_stroke(
    stroke: &Stroke2D,
    cloud: &OrganizedPointCloud,
    camera: &CameraModel,
    normals: &NormalMap,
) -> Result<Path3D> {
    if stroke.is_empty() {
        return Err(GeometryError::InvalidInput("stroke has no pixels".into()));
    }
    stroke.check_bounds(cloud.width(), cloud.height())?;
    let mut points: Vec<Vector3<f64>> = Vec::with_capacity(stroke.len());
    let mut ns: Vec<Vector3<f64>> = Vec::with_capacity(stroke.len());
    for &[u, v] in &stroke.pixels {
        let (ru, rv) = (u.round() as usize, v.round() as usize);
        let p_sensor = match interpolated_depth(cloud, u, v) {
            Some(z) => camera.deproject(u, v, z),
            None => {
                let (bu, bv) = cloud
                    .nearest_valid(ru, rv, HOLE_BRIDGE_RADIUS)
                    .ok_or(GeometryError::DepthHole(ru, rv))?;
                *cloud.point(bu, bv)
            }
        };
        let n_sensor = normals
            .nearest(ru, rv, NORMAL_SEARCH_RADIUS)
            .ok_or(GeometryError::NormalUnavailable(ru, rv))?;
        let p = camera.sensor_to_base_point(&p_sensor);
        if points.last() == Some(&p) {
            continue;
        }
        points.push(p);
        ns.push(camera.sensor_to_base_vector(&n_sensor).normalize());
    }
    Path3D::new(points, ns)
}

fn interpolated_depth(cloud: &OrganizedPointCloud, u: f64, v: f64) -> Option<f64> {
    let (u0, v0) = (u.floor() as usize, v.floor() as usize);
    let (u1, v1) = (
        (u0 + 1).min(cloud.width() - 1),
        (v0 + 1).min(cloud.height() - 1),
    );
    let (fu, fv) = (u - u0 as f64, v - v0 as f64);
    let z00 = cloud.get(u0, v0)?.z;
    let z10 = cloud.get(u1, v0)?.z;
    let z01 = cloud.get(u0, v1)?.z;
    let z11 = cloud.get(u1, v1)?.z;
    Some((z00 * (1.0 - fu) + z10 * fu) * (1.0 - fv) + (z01 * (1.0 - fu) + z11 * fu) * fv)
}

/// Greedy arc-thinning: keeps a point once it is at least `min_spacing` from
/// the last kept point. The endpoints are always kept; kept points too close
/// to the final point are dropped so every gap honors the spacing unless the
/// path collapses to its two endpoints.
pub fn downsample_path(path: &Path3D, min_spacing: f64) -> Result<Path3D> {
    if !(min_spacing > 0.0) {
        return Err(GeometryError::InvalidInput(
            "min_spacing must be positive".into(),
        ));
    }
    let n = path.len();
    if n <= 2 {
        return Ok(path.clone());
    }
    // Tolerate accumulated rounding on exact multiples of the spacing.
    let threshold = min_spacing * (1.0 - 1e-9);
    let pts = path.points();
    let mut keep = vec![0usize];
    for i in 1..n - 1 {
        if (pts[i] - pts[*keep.last().unwrap()]).norm() >= threshold {
            keep.push(i);
        }
    }
    while keep.len() > 1 && (pts[n - 1] - pts[*keep.last().unwrap()]).norm() < threshold {
        keep.pop();
    }
    keep.push(n - 1);
    Path3D::new(
        keep.iter().map(|&i| pts[i]).collect(),
        keep.iter().map(|&i| path.normals()[i]).collect(),
    )
}

/// Arc-length moving average of points and normals over `window` meters.
/// The window shrinks toward the ends so the endpoints stay fixed; points
/// that collapse onto their predecessor are dropped.
pub fn smooth_path(path: &Path3D, window: f64) -> Result<Path3D> {
    if !(window >= 0.0) || !window.is_finite() {
        return Err(GeometryError::InvalidInput(
            "smoothing window must be finite and non-negative".into(),
        ));
    }
    let pts = path.points();
    let n = pts.len();
    if n <= 2 || window == 0.0 {
        return Ok(path.clone());
    }
    let mut arc = vec![0.0; n];
    for i in 1..n {
        arc[i] = arc[i - 1] + (pts[i] - pts[i - 1]).norm();
    }
    let total = arc[n - 1];
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut points: Vec<Vector3<f64>> = Vec::with_capacity(n);
    let mut normals: Vec<Vector3<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let half = (window / 2.0).min(arc[i]).min(total - arc[i]);
        while arc[lo] < arc[i] - half {
            lo += 1;
        }
        hi = hi.max(i);
        while hi + 1 < n && arc[hi + 1] <= arc[i] + half {
            hi += 1;
        }
        while hi > i && arc[hi] > arc[i] + half {
            hi -= 1;
        }
        let lo_i = lo.min(i);
        let count = (hi - lo_i + 1) as f64;
        let p = pts[lo_i..=hi].iter().sum::<Vector3<f64>>() / count;
        let m = path.normals()[lo_i..=hi].iter().sum::<Vector3<f64>>();
        let m = if m.norm() > 1e-12 { m.normalize() } else { path.normals()[i] };
        if points.last() == Some(&p) {
            continue;
        }
        points.push(p);
        normals.push(m);
    }
    Path3D::new(points, normals)
}

/// Moving reference frame attached to a path point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathFrame {
    pub p: Vector3<f64>,
    /// Tangent: the step to the next point projected onto the tangent plane.
    pub t: Vector3<f64>,
    /// Surface normal.
    pub n: Vector3<f64>,
    /// Binormal `t x n`.
    pub s: Vector3<f64>,
    /// Tool-to-base rotation for this point.
    pub tool_rotation: Matrix3<f64>,
}

impl PathFrame {
    /// Columns `[t | n | s]`.
    pub fn axes(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.t, self.n, self.s])
    }
}

/// Builds one frame per path point; the last point reuses the final step.
pub fn path_frames(path: &Path3D) -> Result<Vec<PathFrame>> {
    let n = path.len();
    if n < 2 {
        return Err(GeometryError::InvalidInput(
            "path needs at least two points".into(),
        ));
    }
    let pts = path.points();
    (0..n)
        .map(|i| {
            let delta = if i + 1 < n {
                pts[i + 1] - pts[i]
            } else {
                pts[i] - pts[i - 1]
            };
            let normal = path.normals()[i];
            let t = delta - delta.dot(&normal) * normal;
            let len = t.norm();
            if len < 1e-9 {
                return Err(GeometryError::DegenerateTangent(i));
            }
            let t = t / len;
            let s = t.cross(&normal);
            let mut frame = PathFrame {
                p: pts[i],
                t,
                n: normal,
                s,
                tool_rotation: Matrix3::identity(),
            };
            frame.tool_rotation = tool_orientation(&frame);
            Ok(frame)
        })
        .collect()
}

/// Tool-to-base rotation with the tool y-axis along the tangent and the tool
/// z-axis along `-n`. The x-axis is `n x t` so the result is a proper rotation.
pub fn tool_orientation(frame: &PathFrame) -> Matrix3<f64> {
    Matrix3::from_columns(&[frame.n.cross(&frame.t), frame.t, -frame.n])
}
