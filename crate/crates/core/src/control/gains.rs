use nalgebra::{Matrix3, Matrix6};
use serde::{Deserialize, Serialize};

use super::{ControlError, Result};

/// Impedance and force-loop gains. Stiffness and damping entries are ordered
/// `[t, n, s]` translational then `[t, n, s]` rotational, all in the path frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlGains {
    /// N/m for the first three entries, N·m/rad for the last three.
    pub stiffness: [f64; 6],
    /// N·s/m and N·m·s/rad.
    pub damping: [f64; 6],
    /// Force-loop proportional gain (dimensionless).
    pub k_p: f64,
    /// Force-loop derivative gain (s).
    pub k_d: f64,
    /// Desired contact force magnitude (N).
    pub f_n: f64,
    /// Joint damping applied in the null space of the task (N·m·s/rad).
    pub null_damping: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        let stiffness = [1000.0, 50.0, 1000.0, 50.0, 50.0, 50.0];
        Self {
            stiffness,
            damping: stiffness.map(|k| 2.0 * k.sqrt()),
            k_p: 50.0,
            k_d: 0.0,
            f_n: 10.0,
            null_damping: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainWarning {
    /// Normal stiffness exceeds one of the tangential stiffnesses.
    StiffNormal,
}

impl ControlGains {
    /// Rejects negative or non-finite gains; returns soft warnings.
    pub fn validate(&self) -> Result<Vec<GainWarning>> {
        let all = self.stiffness.iter().chain(&self.damping).chain([
            &self.k_p,
            &self.k_d,
            &self.f_n,
            &self.null_damping,
        ]);
        for v in all {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(ControlError::InvalidInput(format!(
                    "gains must be finite and non-negative, got {v}"
                )));
            }
        }
        let mut warnings = Vec::new();
        if self.stiffness[1] > self.stiffness[0] || self.stiffness[1] > self.stiffness[2] {
            warnings.push(GainWarning::StiffNormal);
        }
        Ok(warnings)
    }

    /// Replaces the damping with `2 sqrt(k m)` per axis, where `m` is the
    /// task-space inertia seen along each path-frame axis.
    pub fn critically_damped(mut self, mx: &Matrix6<f64>, axes: &Matrix3<f64>) -> Self {
        let r = block_rotation(axes);
        let local = r.transpose() * mx * r;
        for i in 0..6 {
            self.damping[i] = 2.0 * (self.stiffness[i] * local[(i, i)].max(0.0)).sqrt();
        }
        self
    }

    /// Stiffness as a base-frame 6x6 matrix for the given path-frame axes.
    pub fn stiffness_matrix(&self, axes: &Matrix3<f64>) -> Matrix6<f64> {
        rotate_diagonal(&self.stiffness, axes)
    }

    pub fn damping_matrix(&self, axes: &Matrix3<f64>) -> Matrix6<f64> {
        rotate_diagonal(&self.damping, axes)
    }
}

pub(crate) fn block_rotation(axes: &Matrix3<f64>) -> Matrix6<f64> {
    let mut r = Matrix6::zeros();
    r.fixed_view_mut::<3, 3>(0, 0).copy_from(axes);
    r.fixed_view_mut::<3, 3>(3, 3).copy_from(axes);
    r
}

fn rotate_diagonal(diag: &[f64; 6], axes: &Matrix3<f64>) -> Matrix6<f64> {
    let r = block_rotation(axes);
    r * Matrix6::from_diagonal(&nalgebra::Vector6::from_column_slice(diag)) * r.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_soft_normal_convention() {
        let g = ControlGains::default();
        assert_eq!(g.validate().unwrap(), vec![]);
        let stiff = ControlGains {
            stiffness: [100.0, 500.0, 100.0, 1.0, 1.0, 1.0],
            ..g.clone()
        };
        assert_eq!(stiff.validate().unwrap(), vec![GainWarning::StiffNormal]);
        let bad = ControlGains { f_n: -1.0, ..g };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn stiffness_rotates_with_frame() {
        let g = ControlGains::default();
        // t = y, n = z, s = x
        let axes = Matrix3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        let k = g.stiffness_matrix(&axes);
        assert!((k[(1, 1)] - 1000.0).abs() < 1e-12);
        assert!((k[(2, 2)] - 50.0).abs() < 1e-12);
        assert!((k[(0, 0)] - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn critical_damping_uses_axis_inertia() {
        let mx = Matrix6::from_diagonal(&nalgebra::Vector6::new(4.0, 2.0, 1.0, 0.1, 0.1, 0.1));
        let g = ControlGains::default().critically_damped(&mx, &Matrix3::identity());
        assert!((g.damping[0] - 2.0 * (1000.0f64 * 4.0).sqrt()).abs() < 1e-12);
        assert!((g.damping[1] - 2.0 * (50.0f64 * 2.0).sqrt()).abs() < 1e-12);
    }
}
