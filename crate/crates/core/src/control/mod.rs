//! Operational-space impedance control with a scalar normal-force loop.
//!
//! The impedance law shapes `M_x e'' + D e' + K e = F_ext` with `K` and `D`
//! diagonal in the path frame `[t | n | s]`. The force loop adds a pure force
//! along the surface normal driven by the measured contact force.

mod controller;
mod estimate;
mod gains;
mod law;
mod trajectory;

pub use controller::HybridController;
pub use estimate::{
    estimate_contact_force, ContactForceEstimator, Differentiator, ForceEstimate, LowPass,
    FILTER_CUTOFF_HZ,
};
pub use gains::{ControlGains, GainWarning};
pub use law::{
    cartesian_error, force_torque, hybrid_torque, impedance_torque, ControlOutput, ForceTerm,
    ImpedanceTerm, MotionTarget,
};
pub use trajectory::{track_path, PoseTrajectory, SpeedProfile, Trapezoid};

use thiserror::Error;

use crate::dynamics::DynamicsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, ControlError>;
