//! Penalty contact between a single tool point and a sensed height field.
//!
//! The environment owns its own copy of the surface, sampled from a point
//! cloud in the base frame. Contact normals come from the height-field
//! gradient, never from the perception normal map.

mod field;
mod wrench;

pub use field::{surface_from_cloud, HeightField, SurfaceModel, SurfaceParams};
pub use wrench::{contact_wrench, ContactSample, ToolGeometry};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContactError {
    #[error("point ({x:.4}, {y:.4}) lies outside the height field")]
    OutOfDomain { x: f64, y: f64 },
    #[error("invalid surface: {0}")]
    InvalidSurface(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, ContactError>;
