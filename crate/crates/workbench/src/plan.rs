//! Waypoint planning: free-space transits between contact strokes, checked by
//! an IK sweep.
//!
//! Reversing the stroke direction turns the tool half a revolution about the
//! normal. A turn wider than a quarter revolution gets an intermediate frame,
//! and the sense of the turn (short or long way round) is the first one the
//! sweep can follow within the joint limits.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DVector, Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use surfteach_core::dynamics::{
    forward_kinematics, inverse_kinematics, rotation_log, ArmModel, CartesianPose, IkOptions,
};
use surfteach_core::geometry::PathFrame;

use crate::error::Result;

/// A contact stroke and the free-space waypoints that lead to its start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    /// Ends above the first contact frame.
    pub transit: Vec<PathFrame>,
    pub contact: Vec<PathFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub legs: Vec<Leg>,
}

impl Plan {
    /// Every waypoint in visiting order.
    pub fn waypoints(&self) -> Vec<PathFrame> {
        self.legs.iter().flat_map(|l| l.transit.iter().chain(&l.contact).copied()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Reachability {
    Reachable,
    /// `index` counts waypoints in visiting order.
    Unreachable { index: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct Clearance {
    /// Height above the first contact point where a transit ends (m).
    pub approach: f64,
    /// Lift along +n after a stroke (m).
    pub lift: f64,
}

fn offset(f: &PathFrame, h: f64) -> PathFrame {
    PathFrame { p: f.p + f.n * h, ..*f }
}

fn rotated(f: &PathFrame, r: &Matrix3<f64>, p: Vector3<f64>) -> PathFrame {
    PathFrame { p, t: r * f.t, n: r * f.n, s: r * f.s, tool_rotation: r * f.tool_rotation }
}

/// Intermediate frames for the turn from `a` to `b`: none when the turn is at
/// most a quarter revolution, otherwise one halfway frame per sense.
fn turn_options(a: &PathFrame, b: &PathFrame) -> Vec<Vec<PathFrame>> {
    let spin = rotation_log(&(b.tool_rotation * a.tool_rotation.transpose()));
    let angle = spin.norm();
    if angle <= FRAC_PI_2 + 1e-9 {
        return vec![Vec::new()];
    }
    let axis = spin / angle;
    let mid = (a.p + b.p) / 2.0;
    let short = Rotation3::new(axis * (angle / 2.0)).into_inner();
    let long = Rotation3::new(-axis * ((2.0 * PI - angle) / 2.0)).into_inner();
    vec![vec![rotated(a, &short, mid)], vec![rotated(a, &long, mid)]]
}

/// IK sweep from `q`; the final posture, or the offset of the first failure.
fn sweep(model: &ArmModel, q: &DVector<f64>, frames: &[PathFrame]) -> Result<std::result::Result<DVector<f64>, usize>> {
    let opts = IkOptions::default();
    let mut q = q.clone();
    for (i, f) in frames.iter().enumerate() {
        let sol = inverse_kinematics(model, &CartesianPose::new(f.p, f.tool_rotation), &q, &opts)?;
        if !sol.converged || !model.within_limits(&sol.q) {
            return Ok(Err(i));
        }
        q = sol.q;
    }
    Ok(Ok(q))
}

/// Plans transits for `strokes` starting at posture `q0` and checks every
/// waypoint with damped least-squares IK seeded by its predecessor.
pub fn plan_strokes(
    model: &ArmModel,
    q0: &DVector<f64>,
    strokes: &[Vec<PathFrame>],
    clearance: Clearance,
) -> Result<(Reachability, Option<Plan>)> {
    let start = forward_kinematics(model, q0)?;
    let mut q = q0.clone();
    let mut index = 0;
    let mut legs = Vec::with_capacity(strokes.len());
    let mut prev: Option<PathFrame> = None;
    for stroke in strokes {
        let first = stroke[0];
        let above = offset(&first, clearance.approach);
        let (head, from) = match prev {
            None => (Vec::new(), PathFrame { p: start.position, tool_rotation: start.rotation, ..first }),
            Some(last) => {
                let lifted = offset(&last, clearance.lift);
                (vec![lifted], lifted)
            }
        };
        let mut furthest = 0;
        let mut accepted = None;
        for mid in turn_options(&from, &above) {
            let transit: Vec<PathFrame> = head.iter().chain(&mid).copied().chain([above]).collect();
            let frames: Vec<PathFrame> = transit.iter().chain(stroke).copied().collect();
            match sweep(model, &q, &frames)? {
                Ok(q_end) => {
                    accepted = Some((transit, q_end));
                    break;
                }
                Err(i) => furthest = furthest.max(i),
            }
        }
        let Some((transit, q_end)) = accepted else {
            return Ok((Reachability::Unreachable { index: index + furthest }, None));
        };
        index += transit.len() + stroke.len();
        q = q_end;
        prev = stroke.last().copied();
        legs.push(Leg { transit, contact: stroke.clone() });
    }
    Ok((Reachability::Reachable, Some(Plan { legs })))
}
