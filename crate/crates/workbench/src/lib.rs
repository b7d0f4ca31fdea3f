//! Teach-and-execute workbench: scenario loading, synthetic scenes, sessions
//! with a phase machine, closed-loop execution, telemetry and the HTTP service.

pub mod error;
pub mod execute;
pub mod headless;
pub mod plan;
pub mod scenario;
pub mod scene;
pub mod service;
pub mod session;
pub mod telemetry;
pub mod textures;
pub mod xyzn;

pub use error::{Result, WorkbenchError};
pub use scenario::{load_scenario, Scenario};
pub use session::{Phase, Session};
