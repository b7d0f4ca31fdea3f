//! Scripted sessions without a UI: teach, define, pair and execute, then
//! write the telemetry as CSV.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use surfteach_core::geometry::Stroke2D;

use crate::error::{Result, WorkbenchError};
use crate::execute::RunReport;
use crate::scenario::Scenario;
use crate::scene::Scene;
use crate::session::Session;
use crate::telemetry::{write_csv, TelemetryFrame};

/// Scan-line spacing of areas when none is given (pixels).
pub const DEFAULT_AREA_SPACING: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    #[default]
    Pixels,
    /// Table `(x, y)` in meters, mapped through the camera onto the surface.
    Meters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeachCommand {
    pub object: String,
    #[serde(default)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskCommand {
    /// Object the path is paired with.
    pub object: String,
    #[serde(default)]
    pub units: Units,
    #[serde(default)]
    pub stroke: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub polygon: Option<Vec<[f64; 2]>>,
    /// Scan-line spacing for polygons, pixels.
    #[serde(default)]
    pub spacing: Option<f64>,
}

/// Command script for [`run_headless`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathScript {
    pub version: u32,
    #[serde(default)]
    pub teach: Vec<TeachCommand>,
    #[serde(default)]
    pub task: Vec<TaskCommand>,
}

impl PathScript {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| WorkbenchError::InvalidInput(e.to_string()))?;
        let script: PathScript = serde_path_to_error::deserialize(de)
            .map_err(|e| WorkbenchError::InvalidInput(format!("path script field `{}`: {}", e.path(), e.inner().message())))?;
        if script.version != 1 {
            return Err(WorkbenchError::InvalidInput(format!("unsupported path script version {}", script.version)));
        }
        Ok(script)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Pixel polyline through table points, sampled at most one pixel apart.
pub fn meters_to_pixels(scene: &Scene, points: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    let px: Vec<[f64; 2]> = points
        .iter()
        .map(|p| {
            scene
                .pixel_of(p[0], p[1])
                .ok_or_else(|| WorkbenchError::InvalidInput(format!("table point ({}, {}) is not visible", p[0], p[1])))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![px[0]];
    for w in px.windows(2) {
        let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        let n = d.ceil().max(1.0) as usize;
        for k in 1..=n {
            let s = k as f64 / n as f64;
            out.push([w[0][0] + s * (w[1][0] - w[0][0]), w[0][1] + s * (w[1][1] - w[0][1])]);
        }
    }
    Ok(out)
}

fn to_pixels(scene: &Scene, units: Units, points: &[[f64; 2]], densify: bool) -> Result<Vec<[f64; 2]>> {
    match (units, densify) {
        (Units::Pixels, _) => Ok(points.to_vec()),
        (Units::Meters, true) => meters_to_pixels(scene, points),
        (Units::Meters, false) => points
            .iter()
            .map(|q| {
                scene
                    .pixel_of(q[0], q[1])
                    .ok_or_else(|| WorkbenchError::InvalidInput(format!("table point ({}, {}) is not visible", q[0], q[1])))
            })
            .collect(),
    }
}

/// Defines a stroke or a polygon area in `session` and returns the path id.
/// Meter strokes are densified to one-pixel steps; polygons keep their vertices.
pub fn define_input(
    session: &mut Session,
    units: Units,
    stroke: Option<&[[f64; 2]]>,
    polygon: Option<&[[f64; 2]]>,
    spacing: Option<f64>,
) -> Result<u64> {
    match (stroke, polygon) {
        (Some(s), None) => {
            let px = to_pixels(&session.scene, units, s, true)?;
            session.define_path(Stroke2D::new(px))
        }
        (None, Some(p)) => {
            let px = to_pixels(&session.scene, units, p, false)?;
            session.define_area(Stroke2D::new(px), spacing.unwrap_or(DEFAULT_AREA_SPACING))
        }
        _ => Err(WorkbenchError::InvalidInput("give exactly one of `stroke` or `polygon`".into())),
    }
}

impl TaskCommand {
    /// Defines the path in `session` and returns its id.
    pub fn define(&self, session: &mut Session) -> Result<u64> {
        define_input(session, self.units, self.stroke.as_deref(), self.polygon.as_deref(), self.spacing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadlessReport {
    pub runs: Vec<RunReport>,
    pub frames: Vec<TelemetryFrame>,
}

/// Runs the script in a fresh session. Telemetry of consecutive tasks is
/// concatenated with continuing time and sequence numbers.
pub fn run_script(scenario: Scenario, script: &PathScript) -> Result<(Session, HeadlessReport)> {
    let mut session = Session::new(1, scenario)?;
    for t in &script.teach {
        session.teach_from_scene(&t.object, t.samples)?;
    }
    let mut runs = Vec::new();
    let mut frames: Vec<TelemetryFrame> = Vec::new();
    for task in &script.task {
        let id = task.define(&mut session)?;
        session.pair_path(id, &task.object)?;
        let (t0, s0) = frames.last().map_or((0.0, 0), |f| (f.t + session.scenario.execution.telemetry_period, f.seq + 1));
        let report = session.execute(id, |_| true)?;
        frames.extend(session.telemetry().iter().map(|f| TelemetryFrame { t: f.t + t0, seq: f.seq + s0, ..f.clone() }));
        let failed = !matches!(report.outcome, crate::execute::Outcome::Completed);
        runs.push(report);
        if failed {
            break;
        }
        session.transition(crate::session::Phase::PathSpec, "next task")?;
    }
    Ok((session, HeadlessReport { runs, frames }))
}

/// Runs `script` against `scenario` and writes the telemetry CSV to `out`.
pub fn run_headless<W: Write>(scenario: Scenario, script: &PathScript, out: W) -> Result<HeadlessReport> {
    let dof = scenario.arm_model()?.dof();
    let (_, report) = run_script(scenario, script)?;
    write_csv(&report.frames, dof, out)?;
    Ok(report)
}
