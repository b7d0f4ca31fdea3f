//! Serial-arm kinematics and rigid-body dynamics.
//!
//! Joint-space inertia comes from the composite-rigid-body algorithm and the
//! velocity-product and gravity torques from recursive Newton-Euler, both
//! written in base-frame coordinates. The simulator integrates
//! `M qdd + C qd + g = tau + J^T F_ext - friction` with semi-implicit Euler.

mod ik;
mod kinematics;
mod model;
mod rigid_body;

pub use ik::{inverse_kinematics, pose_error, IkOptions, IkSolution};
pub use kinematics::{
    forward_kinematics, jacobian, jdot_qdot, rotation_log, CartesianPose, CartesianState,
    ChainFrames,
};
pub use model::{ArmModel, Joint, JointState, Link};
pub use rigid_body::{
    coriolis_term, forward_dynamics, gravity_term, inverse_dynamics, kinetic_energy, mass_matrix,
    potential_energy, smallest_singular_value, step, task_space_inertia, task_space_mass,
    task_space_mass_damped, DAMPING_LAMBDA, DAMPING_ONSET, MAX_STEP, SINGULAR_THRESHOLD,
};

pub(crate) use kinematics::jdot_qdot_from;
pub(crate) use rigid_body::{crba, rnea};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("Jacobian is near singular (smallest singular value {sigma_min:.3e})")]
    NearSingular { sigma_min: f64 },
}

pub type Result<T> = std::result::Result<T, DynamicsError>;
