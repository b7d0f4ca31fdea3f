use nalgebra::{DVector, Matrix6, Vector6};

use super::Result;
use crate::dynamics::{
    smallest_singular_value, ArmModel, ChainFrames, DynamicsError, DAMPING_LAMBDA, DAMPING_ONSET,
    SINGULAR_THRESHOLD,
};

/// Cutoff of the measurement low-pass and the force differentiator.
pub const FILTER_CUTOFF_HZ: f64 = 20.0;

/// First-order discrete low-pass `y += a (x - y)`, `a = dt / (dt + 1/(2 pi fc))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowPass {
    alpha: f64,
    state: Option<Vector6<f64>>,
}

impl LowPass {
    pub fn new(cutoff_hz: f64, dt: f64) -> Self {
        let tau = 1.0 / (std::f64::consts::TAU * cutoff_hz);
        Self {
            alpha: dt / (dt + tau),
            state: None,
        }
    }

    /// Feeds one sample; the first sample initializes the output.
    pub fn update(&mut self, x: &Vector6<f64>) -> Vector6<f64> {
        let y = match self.state {
            None => *x,
            Some(y) => y + (x - y) * self.alpha,
        };
        self.state = Some(y);
        y
    }

    pub fn value(&self) -> Option<Vector6<f64>> {
        self.state
    }

    pub fn reset(&mut self) {
        self.state = None;
    }
}

/// Backward difference of a low-passed signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Differentiator {
    filter: LowPass,
    dt: f64,
    previous: Option<Vector6<f64>>,
}

impl Differentiator {
    pub fn new(cutoff_hz: f64, dt: f64) -> Self {
        Self {
            filter: LowPass::new(cutoff_hz, dt),
            dt,
            previous: None,
        }
    }

    pub fn update(&mut self, x: &Vector6<f64>) -> Vector6<f64> {
        let y = self.filter.update(x);
        let rate = self
            .previous
            .map_or(Vector6::zeros(), |p| (y - p) / self.dt);
        self.previous = Some(y);
        rate
    }

    pub fn reset(&mut self) {
        self.filter.reset();
        self.previous = None;
    }
}

/// Least-squares tool wrench from external joint torques, `J^T F = tau_ext`.
/// Near singular poses the solve uses a damped pseudo-inverse; an exactly
/// rank-deficient Jacobian is refused.
pub fn estimate_contact_force(
    model: &ArmModel,
    q: &DVector<f64>,
    tau_ext: &DVector<f64>,
) -> Result<Vector6<f64>> {
    model.check_dim(tau_ext, "tau_ext")?;
    let chain = ChainFrames::compute(model, q)?;
    let jac = chain.jacobian();
    let sigma_min = smallest_singular_value(&jac);
    if sigma_min <= SINGULAR_THRESHOLD {
        return Err(DynamicsError::NearSingular { sigma_min }.into());
    }
    let mut jjt: Matrix6<f64> = &jac * jac.transpose();
    if sigma_min < DAMPING_ONSET {
        jjt += Matrix6::identity() * DAMPING_LAMBDA * DAMPING_LAMBDA;
    }
    let rhs: Vector6<f64> = &jac * tau_ext;
    jjt.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| DynamicsError::NearSingular { sigma_min }.into())
}

/// Running contact-force estimate: raw solve, 20 Hz low-pass and its
/// derivative. When the solve fails the last estimate is held and flagged stale.
#[derive(Debug, Clone)]
pub struct ContactForceEstimator {
    filter: LowPass,
    rate: Differentiator,
    last_raw: Vector6<f64>,
    stale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceEstimate {
    pub raw: Vector6<f64>,
    pub filtered: Vector6<f64>,
    pub rate: Vector6<f64>,
    pub stale: bool,
}

impl ContactForceEstimator {
    pub fn new(dt: f64) -> Self {
        Self {
            filter: LowPass::new(FILTER_CUTOFF_HZ, dt),
            rate: Differentiator::new(FILTER_CUTOFF_HZ, dt),
            last_raw: Vector6::zeros(),
            stale: false,
        }
    }

    pub fn update(
        &mut self,
        model: &ArmModel,
        q: &DVector<f64>,
        tau_ext: &DVector<f64>,
    ) -> ForceEstimate {
        match estimate_contact_force(model, q, tau_ext) {
            Ok(f) => {
                self.last_raw = f;
                self.stale = false;
            }
            Err(_) => self.stale = true,
        }
        let filtered = self.filter.update(&self.last_raw);
        let rate = self.rate.update(&self.last_raw);
        ForceEstimate {
            raw: self.last_raw,
            filtered,
            rate,
            stale: self.stale,
        }
    }

    pub fn is_stale(&self) -> bool {
        self.stale
    }
}
