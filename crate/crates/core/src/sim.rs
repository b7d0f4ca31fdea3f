//! Simulated arm in contact with a surface, with noisy joint torque sensing.

use nalgebra::{DVector, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::contact::{contact_wrench, ContactError, ContactSample, SurfaceModel, ToolGeometry};
use crate::dynamics::{step, ArmModel, CartesianPose, ChainFrames, DynamicsError, JointState};

/// Default torque-sensor noise (N·m).
pub const DEFAULT_TORQUE_NOISE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Contact(#[from] ContactError),
}

/// What the robot senses at the current instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensed {
    pub pose: CartesianPose,
    pub twist: Vector6<f64>,
    pub contact: Option<ContactSample>,
    /// `J^T F_ext` plus sensor noise.
    pub tau_ext: DVector<f64>,
}

/// Arm, optional surface and a seeded torque sensor. Each tick is `sense`
/// followed by `advance`; the contact wrench is held over the step.
#[derive(Debug, Clone)]
pub struct Plant {
    pub model: ArmModel,
    pub state: JointState,
    pub tool: ToolGeometry,
    pub surface: Option<SurfaceModel>,
    pub dt: f64,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    held: Vector6<f64>,
    extra: Vector6<f64>,
}

impl Plant {
    pub fn new(model: ArmModel, state: JointState, dt: f64, noise_sigma: f64, seed: u64) -> Self {
        let noise =
            (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).expect("finite sigma"));
        Self {
            model,
            state,
            tool: ToolGeometry::default(),
            surface: None,
            dt,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
            held: Vector6::zeros(),
            extra: Vector6::zeros(),
        }
    }

    pub fn with_surface(mut self, surface: SurfaceModel, tool: ToolGeometry) -> Self {
        self.surface = Some(surface);
        self.tool = tool;
        self
    }

    /// Constant wrench added to the contact wrench, e.g. a hand push.
    pub fn set_external_wrench(&mut self, wrench: Vector6<f64>) {
        self.extra = wrench;
    }

    pub fn sense(&mut self) -> Result<Sensed, SimError> {
        let chain = ChainFrames::compute(&self.model, &self.state.q)?;
        let jac = chain.jacobian();
        let pose = chain.tool_pose();
        let twist: Vector6<f64> = &jac * &self.state.qd;
        let contact = match &self.surface {
            Some(s) => Some(contact_wrench(s, &self.tool, &pose, &twist)?),
            None => None,
        };
        self.held = contact.map_or(Vector6::zeros(), |c| c.wrench) + self.extra;
        let mut tau_ext = jac.transpose() * self.held;
        if let Some(n) = &self.noise {
            for v in tau_ext.iter_mut() {
                *v += n.sample(&mut self.rng);
            }
        }
        Ok(Sensed {
            pose,
            twist,
            contact,
            tau_ext,
        })
    }

    pub fn advance(&mut self, tau: &DVector<f64>) -> Result<(), SimError> {
        self.state = step(&self.model, &self.state, tau, &self.held, self.dt)?;
        Ok(())
    }
}
