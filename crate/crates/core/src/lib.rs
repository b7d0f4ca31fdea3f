//! Core of the surface-contact teaching workbench.
//!
//! * [`geometry`]: organized clouds, normals, stroke projection, path frames.
//! * [`dynamics`]: serial-arm kinematics and rigid-body dynamics.
//! * [`control`]: operational-space impedance plus normal-force regulation.
//! * [`contact`]: penalty contact against a sensed height field.
//! * [`sim`]: closed-loop plant with noisy joint torque sensing.
//! * [`classifier`]: incremental open-set nearest-prototype classification.

pub mod classifier;
pub mod contact;
pub mod control;
pub mod dynamics;
pub mod geometry;
pub mod sim;
