use nalgebra::{Matrix3, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::{ControlError, MotionTarget, Result};
use crate::dynamics::{rotation_log, CartesianPose};
use crate::geometry::PathFrame;

/// Speed and acceleration limits along the path (m/s, m/s²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub v_max: f64,
    pub a_max: f64,
}

impl Default for SpeedProfile {
    fn default() -> Self {
        Self {
            v_max: 0.1,
            a_max: 0.5,
        }
    }
}

/// Trapezoidal (or triangular, for short paths) arc-length profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trapezoid {
    length: f64,
    accel: f64,
    cruise: f64,
    ramp: f64,
    duration: f64,
}

impl Trapezoid {
    pub fn new(length: f64, profile: SpeedProfile) -> Result<Self> {
        let SpeedProfile { v_max, a_max } = profile;
        if !(v_max > 0.0 && a_max > 0.0 && v_max.is_finite() && a_max.is_finite()) {
            return Err(ControlError::InvalidInput(format!(
                "speed limits must be positive, got {profile:?}"
            )));
        }
        if !(length >= 0.0 && length.is_finite()) {
            return Err(ControlError::InvalidInput(format!(
                "path length must be non-negative, got {length}"
            )));
        }
        let (cruise, ramp, duration) = if length >= v_max * v_max / a_max {
            (v_max, v_max / a_max, length / v_max + v_max / a_max)
        } else {
            let peak = (length * a_max).sqrt();
            (peak, peak / a_max, 2.0 * peak / a_max)
        };
        Ok(Self {
            length,
            accel: a_max,
            cruise,
            ramp,
            duration,
        })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Arc length, speed and acceleration at time `t`, clamped to `[0, duration]`.
    pub fn sample(&self, t: f64) -> (f64, f64, f64) {
        let (a, v, tr, total) = (self.accel, self.cruise, self.ramp, self.duration);
        if t <= 0.0 || total == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        if t >= total {
            return (self.length, 0.0, 0.0);
        }
        if t < tr {
            (0.5 * a * t * t, a * t, a)
        } else if t <= total - tr {
            (0.5 * a * tr * tr + v * (t - tr), v, 0.0)
        } else {
            let r = total - t;
            (self.length - 0.5 * a * r * r, a * r, -a)
        }
    }
}

/// Time-parameterized motion along a polyline of path frames. Positions are
/// interpolated linearly and orientations geodesically between frames.
#[derive(Debug, Clone)]
pub struct PoseTrajectory {
    frames: Vec<PathFrame>,
    cumulative: Vec<f64>,
    profile: Trapezoid,
}

impl PoseTrajectory {
    pub fn new(frames: Vec<PathFrame>, profile: SpeedProfile) -> Result<Self> {
        if frames.is_empty() {
            return Err(ControlError::InvalidInput(
                "trajectory needs at least one frame".into(),
            ));
        }
        let mut cumulative = vec![0.0];
        for w in frames.windows(2) {
            let len = (w[1].p - w[0].p).norm();
            if !(len > 1e-12) {
                return Err(ControlError::InvalidInput(
                    "consecutive trajectory frames coincide".into(),
                ));
            }
            cumulative.push(cumulative.last().unwrap() + len);
        }
        let profile = Trapezoid::new(*cumulative.last().unwrap(), profile)?;
        Ok(Self {
            frames,
            cumulative,
            profile,
        })
    }

    pub fn duration(&self) -> f64 {
        self.profile.duration()
    }

    pub fn length(&self) -> f64 {
        self.profile.length()
    }

    pub fn frames(&self) -> &[PathFrame] {
        &self.frames
    }

    pub fn sample(&self, elapsed: f64) -> MotionTarget {
        let (s, v, a) = self.profile.sample(elapsed);
        let last = self.frames.len() - 1;
        if last == 0 {
            let f = self.frames[0];
            return MotionTarget::at_rest(CartesianPose::new(f.p, f.tool_rotation), f);
        }
        let k = match self.cumulative.partition_point(|&c| c <= s) {
            0 => 0,
            i => (i - 1).min(last - 1),
        };
        let (f0, f1) = (&self.frames[k], &self.frames[k + 1]);
        let seg = self.cumulative[k + 1] - self.cumulative[k];
        let lambda = ((s - self.cumulative[k]) / seg).clamp(0.0, 1.0);
        let dir = (f1.p - f0.p) / seg;
        let spin = rotation_log(&(f1.tool_rotation * f0.tool_rotation.transpose()));
        let turn = Rotation3::new(spin * lambda).into_inner();
        let rotation: Matrix3<f64> = turn * f0.tool_rotation;
        let position = f0.p + (f1.p - f0.p) * lambda;
        let lin_v = dir * v;
        let ang_v = spin * (v / seg);
        let lin_a = dir * a;
        let ang_a = spin * (a / seg);
        let frame = PathFrame {
            p: position,
            t: turn * f0.t,
            n: turn * f0.n,
            s: turn * f0.s,
            tool_rotation: rotation,
        };
        MotionTarget {
            pose: CartesianPose::new(position, rotation),
            twist: stack(lin_v, ang_v),
            accel: stack(lin_a, ang_a),
            frame,
        }
    }
}

fn stack(a: Vector3<f64>, b: Vector3<f64>) -> Vector6<f64> {
    Vector6::new(a.x, a.y, a.z, b.x, b.y, b.z)
}

/// Reference pose, twist and acceleration `elapsed` seconds into a path.
pub fn track_path(
    frames: &[PathFrame],
    elapsed: f64,
    profile: SpeedProfile,
) -> Result<MotionTarget> {
    Ok(PoseTrajectory::new(frames.to_vec(), profile)?.sample(elapsed))
}
