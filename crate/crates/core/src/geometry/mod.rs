//! Sensed-surface geometry: organized point clouds, normal estimation,
//! stroke projection and path-aligned reference frames.

mod area;
mod camera;
mod cloud;
mod normals;
mod path;
mod synthetic;

pub use area::{area_to_strokes, polygon_is_simple};
pub use camera::CameraModel;
pub use cloud::{read_depth_png, write_depth_png, DepthImage, OrganizedPointCloud};
pub use normals::{
    estimate_normal_pca, estimate_normals_integral, NormalMap, DEFAULT_HALF_WINDOW,
    DEFAULT_PCA_RADIUS,
};
pub use path::{
    downsample_path, path_frames, project_stroke, smooth_path, tool_orientation, Path3D, PathFrame, Stroke2D,
    DEFAULT_MIN_SPACING, HOLE_BRIDGE_RADIUS,
};
pub use synthetic::{render_depth, Primitive};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate neighborhood: {0}")]
    DegenerateNeighborhood(String),
    #[error("no valid depth within reach of pixel ({0}, {1})")]
    DepthHole(usize, usize),
    #[error("no valid surface normal near pixel ({0}, {1})")]
    NormalUnavailable(usize, usize),
    #[error("tangent vanishes at path index {0}")]
    DegenerateTangent(usize),
    #[error("polygon is not simple: {0}")]
    InvalidPolygon(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GeometryError {
    fn from(e: std::io::Error) -> Self {
        GeometryError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, GeometryError>;
