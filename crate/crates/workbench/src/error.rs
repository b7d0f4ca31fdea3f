use thiserror::Error;

use surfteach_core::classifier::ClassifierError;
use surfteach_core::contact::ContactError;
use surfteach_core::control::ControlError;
use surfteach_core::dynamics::DynamicsError;
use surfteach_core::geometry::GeometryError;
use surfteach_core::sim::SimError;

use crate::scenario::ScenarioError;
use crate::session::Phase;

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    /// A stroke that cannot be turned into a path, with the image pixel at fault.
    #[error("{source} at pixel ({}, {})", pixel[0], pixel[1])]
    StrokeGeometry { pixel: [usize; 2], source: GeometryError },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot go from {from:?} to {to:?}")]
    IllegalTransition { from: Phase, to: Phase },
    #[error("no path with id {0}")]
    UnknownPath(u64),
    #[error("no object named {0:?}")]
    UnknownObject(String),
    #[error("path {0} is not paired with an object")]
    NotPaired(u64),
    #[error("path {path} is unreachable from waypoint {index}")]
    Unreachable { path: u64, index: usize },
    #[error("session is executing")]
    Busy,
    #[error("no session with id {0}")]
    UnknownSession(u64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, WorkbenchError>;
