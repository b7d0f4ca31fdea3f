//! Closed-loop run of a path: approach, touch, press, track, with fault supervision.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use surfteach_core::contact::{SurfaceModel, ToolGeometry};
use surfteach_core::control::{ControlGains, HybridController, MotionTarget, PoseTrajectory};
use surfteach_core::dynamics::{
    forward_kinematics, inverse_kinematics, task_space_mass, ArmModel, CartesianPose, IkOptions, JointState,
};
use surfteach_core::geometry::PathFrame;
use surfteach_core::sim::Plant;

use crate::error::{Result, WorkbenchError};
use crate::plan::{Leg, Plan};
use crate::scenario::ExecutionSpec;
use crate::telemetry::TelemetryFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Approach,
    Descend,
    Settle,
    Track,
    Dwell,
    Lift,
}

impl Stage {
    /// Stages in which the tool must stay on the surface.
    fn pressing(self) -> bool {
        matches!(self, Stage::Settle | Stage::Track | Stage::Dwell)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Fault { reason: String, t: f64 },
    Aborted { t: f64 },
}

/// Full-rate statistics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub outcome: Outcome,
    pub duration: f64,
    pub ticks: u64,
    pub frames: u64,
    /// Time of the first confirmed touch (s).
    pub first_contact: Option<f64>,
    /// Ticks after first touch in which the tool had to press.
    pub pressing_ticks: u64,
    /// Pressing ticks without contact.
    pub contact_loss_ticks: u64,
    /// Mean estimated normal force while tracking (N).
    pub mean_fn_meas: f64,
    /// Mean true contact normal force while tracking (N).
    pub mean_contact_force: f64,
    /// RMS position error in the surface tangent plane while tracking (m).
    pub tangential_rms: f64,
    /// Largest angle between tool z and the path's -n while tracking (deg).
    pub max_tool_tilt_deg: f64,
    /// Same against the true surface normal under the tool (deg).
    pub max_tool_tilt_true_deg: f64,
    /// Length of contact strokes tracked (m).
    pub tracked_length: f64,
    pub final_q: Vec<f64>,
    pub final_qd: Vec<f64>,
}

pub struct RunSetup<'a> {
    pub model: &'a ArmModel,
    pub start: JointState,
    pub surface: &'a SurfaceModel,
    pub gains: ControlGains,
    /// Replace the damping with the critical value at the path start pose.
    pub critical_damping: bool,
    pub limits: Vec<f64>,
    pub exec: &'a ExecutionSpec,
    pub noise_sigma: f64,
    pub seed: u64,
}

struct Fault(String);

struct Runner<'a, F> {
    plant: Plant,
    ctl: HybridController,
    exec: &'a ExecutionSpec,
    f_n: f64,
    every: u64,
    tick: u64,
    frames: u64,
    sink: F,
    saturated_run: u64,
    lost_run: u64,
    window_ticks: u64,
    first_contact: Option<f64>,
    pressing_ticks: u64,
    contact_loss_ticks: u64,
    track_ticks: u64,
    fn_sum: f64,
    contact_sum: f64,
    tangential_sq: f64,
    max_tilt: f64,
    max_tilt_true: f64,
    tracked_length: f64,
}

fn angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos().to_degrees()
}

impl<F: FnMut(&TelemetryFrame) -> bool> Runner<'_, F> {
    fn t(&self) -> f64 {
        self.tick as f64 * self.exec.dt
    }

    /// One control tick. Returns whether the tool touched with confirmed force.
    fn step(&mut self, target: &MotionTarget, stage: Stage) -> std::result::Result<bool, RunStop> {
        let s = self.plant.sense().map_err(|e| RunStop::Error(e.into()))?;
        let out = self
            .ctl
            .update(&self.plant.model, &self.plant.state, target, &s.tau_ext)
            .map_err(|e| RunStop::Error(e.into()))?;
        let contact = s.contact.is_some_and(|c| c.contact);
        let t = self.t();

        if self.tick.is_multiple_of(self.every) {
            let e = out.error;
            let frame = TelemetryFrame {
                seq: self.frames,
                t,
                q: self.plant.state.q.iter().copied().collect(),
                position: s.pose.position.into(),
                error: [e[0], e[1], e[2], e[3], e[4], e[5]],
                fn_meas: out.measured_normal,
                fn_des: if self.ctl.force_enabled() { self.f_n } else { 0.0 },
                contact,
                saturated: out.saturated,
            };
            self.frames += 1;
            if !(self.sink)(&frame) {
                return Err(RunStop::Aborted);
            }
        }

        self.saturated_run = if out.saturated { self.saturated_run + 1 } else { 0 };
        if self.saturated_run > self.window_ticks {
            return Err(RunStop::Fault(Fault(format!("torque saturated for more than {} s", self.exec.fault_window))));
        }
        if stage.pressing() && self.first_contact.is_some() {
            self.pressing_ticks += 1;
            if contact {
                self.lost_run = 0;
            } else {
                self.lost_run += 1;
                self.contact_loss_ticks += 1;
            }
            if self.lost_run > self.window_ticks {
                return Err(RunStop::Fault(Fault(format!("contact lost for more than {} s", self.exec.fault_window))));
            }
        } else {
            self.lost_run = 0;
        }
        if stage == Stage::Track {
            self.track_ticks += 1;
            self.fn_sum += out.measured_normal;
            if let Some(c) = s.contact {
                self.contact_sum += c.wrench.fixed_rows::<3>(0).dot(&c.normal);
                let z = s.pose.rotation.column(2).into_owned();
                self.max_tilt_true = self.max_tilt_true.max(angle_deg(&z, &-c.normal));
            }
            let n = target.frame.n;
            let e = s.pose.position - target.pose.position;
            self.tangential_sq += (e - n * e.dot(&n)).norm_squared();
            let z = s.pose.rotation.column(2).into_owned();
            self.max_tilt = self.max_tilt.max(angle_deg(&z, &-n));
        }
        let touched = contact && out.measured_normal > self.exec.touch_force;
        self.plant.advance(&out.tau).map_err(|e| RunStop::Error(e.into()))?;
        self.tick += 1;
        Ok(touched)
    }

    fn hold(&mut self, target: &MotionTarget, stage: Stage, seconds: f64) -> std::result::Result<(), RunStop> {
        let n = (seconds / self.exec.dt).round() as u64;
        for _ in 0..n {
            self.step(target, stage)?;
        }
        Ok(())
    }

    fn follow(&mut self, frames: Vec<PathFrame>, stage: Stage) -> std::result::Result<MotionTarget, RunStop> {
        let traj = PoseTrajectory::new(frames, self.exec.speed).map_err(|e| RunStop::Error(e.into()))?;
        let n = (traj.duration() / self.exec.dt).ceil() as u64;
        for k in 0..=n {
            let target = traj.sample(k as f64 * self.exec.dt);
            self.step(&target, stage)?;
        }
        let end = traj.sample(traj.duration());
        Ok(MotionTarget::at_rest(end.pose, *traj.frames().last().expect("non-empty")))
    }

    /// Moves through `via` (first entry is the current reference) skipping
    /// coincident points; rotation-only moves are held until settled.
    fn transit(&mut self, via: Vec<PathFrame>, stage: Stage) -> std::result::Result<MotionTarget, RunStop> {
        let mut pts: Vec<PathFrame> = Vec::with_capacity(via.len());
        for f in via {
            match pts.last_mut() {
                Some(last) if (last.p - f.p).norm() < 1e-6 => *last = PathFrame { p: last.p, ..f },
                _ => pts.push(f),
            }
        }
        if pts.len() == 1 {
            let f = pts[0];
            let target = MotionTarget::at_rest(CartesianPose::new(f.p, f.tool_rotation), f);
            self.hold(&target, stage, 0.5)?;
            return Ok(target);
        }
        self.follow(pts, stage)
    }

    fn leg(&mut self, leg: &Leg, from: PathFrame, first: bool) -> std::result::Result<PathFrame, RunStop> {
        let exec = self.exec;
        let frames = &leg.contact;
        let f0 = frames[0];
        self.ctl.set_force_enabled(false);
        let via = std::iter::once(from).chain(leg.transit.iter().copied()).collect();
        self.transit(via, if first { Stage::Approach } else { Stage::Lift })?;

        let press = MotionTarget::at_rest(CartesianPose::new(f0.p - f0.n * exec.press_depth, f0.tool_rotation), f0);
        let limit = (exec.descent_timeout / exec.dt).round() as u64;
        let mut touched = false;
        for _ in 0..limit {
            if self.step(&press, Stage::Descend)? {
                touched = true;
                break;
            }
        }
        if !touched {
            return Err(RunStop::Fault(Fault(format!("surface not reached within {} s", exec.descent_timeout))));
        }
        if self.first_contact.is_none() {
            self.first_contact = Some(self.t());
        }
        self.ctl.set_force_enabled(true);
        let hold = MotionTarget::at_rest(CartesianPose::new(f0.p, f0.tool_rotation), f0);
        self.hold(&hold, Stage::Settle, exec.settle)?;
        let end = self.follow(frames.to_vec(), Stage::Track)?;
        self.tracked_length += frames.windows(2).map(|w| (w[1].p - w[0].p).norm()).sum::<f64>();
        self.hold(&end, Stage::Dwell, exec.dwell)?;
        Ok(*frames.last().expect("non-empty"))
    }
}

enum RunStop {
    Fault(Fault),
    Aborted,
    Error(WorkbenchError),
}

/// Runs every leg in order: transit with the force loop off, descend until
/// touch, then press and track the contact stroke. `sink` receives each
/// decimated frame and may return `false` to abort.
pub fn run_plan<F>(setup: RunSetup<'_>, plan: &Plan, sink: F) -> Result<RunReport>
where
    F: FnMut(&TelemetryFrame) -> bool,
{
    let exec = setup.exec;
    let legs = &plan.legs;
    if legs.is_empty() || legs.iter().any(|l| l.contact.len() < 2 || l.transit.is_empty()) {
        return Err(WorkbenchError::InvalidInput("every leg needs a transit and at least two contact frames".into()));
    }
    let mut gains = setup.gains;
    if setup.critical_damping {
        let f0 = &legs[0].contact[0];
        let at_start = inverse_kinematics(
            setup.model,
            &CartesianPose::new(f0.p, f0.tool_rotation),
            &setup.start.q,
            &IkOptions::default(),
        )?;
        let q = if at_start.converged { at_start.q } else { setup.start.q.clone() };
        gains = gains.critically_damped(&task_space_mass(setup.model, &q)?, &f0.axes());
    }
    let f_n = gains.f_n;
    let ctl = HybridController::new(gains, setup.limits, exec.dt)?;
    let plant = Plant::new(setup.model.clone(), setup.start.clone(), exec.dt, setup.noise_sigma, setup.seed)
        .with_surface(setup.surface.clone(), ToolGeometry::default());
    let every = if exec.full_rate { 1 } else { ((exec.telemetry_period / exec.dt).round() as u64).max(1) };
    let mut r = Runner {
        plant,
        ctl,
        exec,
        f_n,
        every,
        tick: 0,
        frames: 0,
        sink,
        saturated_run: 0,
        lost_run: 0,
        window_ticks: (exec.fault_window / exec.dt).round() as u64,
        first_contact: None,
        pressing_ticks: 0,
        contact_loss_ticks: 0,
        track_ticks: 0,
        fn_sum: 0.0,
        contact_sum: 0.0,
        tangential_sq: 0.0,
        max_tilt: 0.0,
        max_tilt_true: 0.0,
        tracked_length: 0.0,
    };

    let pose = forward_kinematics(setup.model, &setup.start.q)?;
    let mut from = PathFrame { p: pose.position, tool_rotation: pose.rotation, ..legs[0].contact[0] };
    let mut outcome = Outcome::Completed;
    for (i, leg) in legs.iter().enumerate() {
        match r.leg(leg, from, i == 0) {
            Ok(end) => from = end,
            Err(RunStop::Fault(Fault(reason))) => {
                outcome = Outcome::Fault { reason, t: r.t() };
                break;
            }
            Err(RunStop::Aborted) => {
                outcome = Outcome::Aborted { t: r.t() };
                break;
            }
            Err(RunStop::Error(e)) => return Err(e),
        }
    }
    let n = r.track_ticks.max(1) as f64;
    let to_vec = |v: &DVector<f64>| v.iter().copied().collect::<Vec<_>>();
    Ok(RunReport {
        outcome,
        duration: r.t(),
        ticks: r.tick,
        frames: r.frames,
        first_contact: r.first_contact,
        pressing_ticks: r.pressing_ticks,
        contact_loss_ticks: r.contact_loss_ticks,
        mean_fn_meas: r.fn_sum / n,
        mean_contact_force: r.contact_sum / n,
        tangential_rms: (r.tangential_sq / n).sqrt(),
        max_tool_tilt_deg: r.max_tilt,
        max_tool_tilt_true_deg: r.max_tilt_true,
        tracked_length: r.tracked_length,
        final_q: to_vec(&r.plant.state.q),
        final_qd: to_vec(&r.plant.state.qd),
    })
}
