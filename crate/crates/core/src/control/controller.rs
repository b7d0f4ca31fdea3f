use nalgebra::{DVector, Vector3};

use super::{
    force_torque, hybrid_torque, impedance_torque, ContactForceEstimator, ControlError,
    ControlGains, ControlOutput, ForceEstimate, MotionTarget, Result,
};
use crate::dynamics::{ArmModel, JointState};

/// Control-loop state: gains, torque limits and the force estimator. The
/// normal-force loop contributes only while enabled.
#[derive(Debug, Clone)]
pub struct HybridController {
    gains: ControlGains,
    limits: Vec<f64>,
    estimator: ContactForceEstimator,
    force_enabled: bool,
    last_estimate: Option<ForceEstimate>,
}

impl HybridController {
    pub fn new(gains: ControlGains, limits: Vec<f64>, dt: f64) -> Result<Self> {
        gains.validate()?;
        if limits.iter().any(|l| !(*l > 0.0)) {
            return Err(ControlError::InvalidInput(
                "torque limits must be positive".into(),
            ));
        }
        Ok(Self {
            gains,
            limits,
            estimator: ContactForceEstimator::new(dt),
            force_enabled: false,
            last_estimate: None,
        })
    }

    pub fn gains(&self) -> &ControlGains {
        &self.gains
    }

    pub fn set_gains(&mut self, gains: ControlGains) -> Result<()> {
        gains.validate()?;
        self.gains = gains;
        Ok(())
    }

    pub fn set_force_enabled(&mut self, on: bool) {
        self.force_enabled = on;
    }

    pub fn force_enabled(&self) -> bool {
        self.force_enabled
    }

    pub fn last_estimate(&self) -> Option<&ForceEstimate> {
        self.last_estimate.as_ref()
    }

    /// One control tick from the current state and the sensed external joint
    /// torques. `measured_normal` in the output is the low-passed `f . n`.
    pub fn update(
        &mut self,
        model: &ArmModel,
        state: &JointState,
        target: &MotionTarget,
        tau_ext: &DVector<f64>,
    ) -> Result<ControlOutput> {
        let est = self.estimator.update(model, &state.q, tau_ext);
        self.last_estimate = Some(est);
        let imp = impedance_torque(model, state, target, &self.gains)?;
        let force = if self.force_enabled {
            Some(force_torque(
                model,
                state,
                &est.raw,
                &est.rate,
                &target.frame,
                &self.gains,
            )?)
        } else {
            None
        };
        let mut out = hybrid_torque(&imp, force.as_ref(), &self.limits)?;
        out.measured_normal =
            Vector3::new(est.filtered[0], est.filtered[1], est.filtered[2]).dot(&target.frame.n);
        Ok(out)
    }
}
