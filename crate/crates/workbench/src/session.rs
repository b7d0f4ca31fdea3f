use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use surfteach_core::classifier::{
    toy_extract, ClassRecord, ClassRegistry, ClassificationResult, ClassifyOptions, GrayImage, SharedRegistry,
    DEFAULT_TARGET_SAMPLES, TOY_DIM,
};
use surfteach_core::dynamics::{ArmModel, JointState};
use surfteach_core::geometry::{
    area_to_strokes, downsample_path, path_frames, project_stroke, smooth_path, CameraModel, GeometryError, Path3D,
    PathFrame, Stroke2D,
};

use crate::error::{Result, WorkbenchError};
use crate::execute::{run_plan, Outcome, RunReport, RunSetup};
use crate::plan::{plan_strokes, Clearance, Plan};
pub use crate::plan::Reachability;
use crate::scenario::Scenario;
use crate::scene::{Scene, SceneObject};
use crate::telemetry::TelemetryFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Teaching,
    Detection,
    PathSpec,
    Executing,
    Done,
    Fault,
}

impl Phase {
    /// Executing is entered only from PathSpec and left only to Done or Fault.
    pub fn can_become(self, to: Phase) -> bool {
        use Phase::*;
        match (self, to) {
            (a, b) if a == b => true,
            (PathSpec, Executing) => true,
            (Executing, Done | Fault) => true,
            (Executing, _) | (_, Executing | Done | Fault) => false,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub seq: u64,
    pub from: Phase,
    pub to: Phase,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Stroke,
    Area,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPath {
    pub id: u64,
    pub kind: PathKind,
    /// Drawn pixels (one stroke) or scan strokes (area).
    pub source: Vec<Stroke2D>,
    /// Contact strokes in base-frame path frames.
    pub strokes: Vec<Vec<PathFrame>>,
}

impl StoredPath {
    pub fn length(&self) -> f64 {
        self.strokes.iter().flat_map(|s| s.windows(2)).map(|w| (w[1].p - w[0].p).norm()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: [usize; 4],
    /// Ground-truth name of the proposal, for display only.
    pub truth: String,
    pub result: ClassificationResult,
}

/// Serializable view of a session for status queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub id: u64,
    pub phase: Phase,
    pub transitions: Vec<Transition>,
    pub classes: Vec<String>,
    pub objects: Vec<SceneObject>,
    pub paths: Vec<PathSummary>,
    pub pairings: BTreeMap<u64, String>,
    pub telemetry_frames: usize,
    pub last_run: Option<RunReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub id: u64,
    pub kind: PathKind,
    pub strokes: usize,
    pub points: usize,
    pub length: f64,
}

/// Called with every logged transition.
pub type TransitionObserver = Arc<dyn Fn(&Transition) + Send + Sync>;

pub struct Session {
    pub id: u64,
    pub scenario: Scenario,
    pub scene: Arc<Scene>,
    pub registry: SharedRegistry,
    pub classify_options: ClassifyOptions,
    model: ArmModel,
    state: JointState,
    phase: Phase,
    transitions: Vec<Transition>,
    paths: BTreeMap<u64, StoredPath>,
    next_path: u64,
    pairings: BTreeMap<u64, String>,
    /// Plans from the latest reachability check.
    plans: BTreeMap<u64, Plan>,
    telemetry: Vec<TelemetryFrame>,
    detections: Vec<Detection>,
    last_run: Option<RunReport>,
    runs: u64,
    observer: Option<TransitionObserver>,
}

/// Attaches the image pixel to stroke errors; a path point index is mapped
/// back through the camera.
fn locate(e: GeometryError, camera: &CameraModel, path: Option<&Path3D>) -> WorkbenchError {
    let pixel = match (&e, path) {
        (GeometryError::DepthHole(u, v) | GeometryError::NormalUnavailable(u, v), _) => Some([*u, *v]),
        (GeometryError::DegenerateTangent(i), Some(path)) => path
            .points()
            .get(*i)
            .and_then(|p| camera.project(p))
            .map(|(u, v)| [u.round().max(0.0) as usize, v.round().max(0.0) as usize]),
        _ => None,
    };
    match pixel {
        Some(pixel) => WorkbenchError::StrokeGeometry { pixel, source: e },
        None => e.into(),
    }
}

impl Session {
    pub fn new(id: u64, scenario: Scenario) -> Result<Self> {
        let scene = Arc::new(Scene::build(&scenario)?);
        Self::with_scene(id, scenario, scene, SharedRegistry::new(ClassRegistry::new(TOY_DIM)?))
    }

    /// Shares an already built scene and registry.
    pub fn with_scene(id: u64, scenario: Scenario, scene: Arc<Scene>, registry: SharedRegistry) -> Result<Self> {
        let model = scenario.arm_model()?;
        let state = scenario.home_state()?;
        Ok(Self {
            id,
            scenario,
            scene,
            registry,
            classify_options: ClassifyOptions::default(),
            model,
            state,
            phase: Phase::Teaching,
            transitions: Vec::new(),
            paths: BTreeMap::new(),
            next_path: 1,
            pairings: BTreeMap::new(),
            plans: BTreeMap::new(),
            telemetry: Vec::new(),
            detections: Vec::new(),
            last_run: None,
            runs: 0,
            observer: None,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn model(&self) -> &ArmModel {
        &self.model
    }

    pub fn joint_state(&self) -> &JointState {
        &self.state
    }

    pub fn paths(&self) -> &BTreeMap<u64, StoredPath> {
        &self.paths
    }

    pub fn path(&self, id: u64) -> Result<&StoredPath> {
        self.paths.get(&id).ok_or(WorkbenchError::UnknownPath(id))
    }

    pub fn pairings(&self) -> &BTreeMap<u64, String> {
        &self.pairings
    }

    pub fn telemetry(&self) -> &[TelemetryFrame] {
        &self.telemetry
    }

    /// Result of the latest detection pass.
    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    /// Completed or faulted runs so far.
    pub fn runs(&self) -> u64 {
        self.runs
    }

    pub fn last_run(&self) -> Option<&RunReport> {
        self.last_run.as_ref()
    }

    pub fn set_observer(&mut self, observer: Option<TransitionObserver>) {
        self.observer = observer;
    }

    pub fn transition(&mut self, to: Phase, reason: &str) -> Result<()> {
        let from = self.phase;
        if !from.can_become(to) {
            return Err(WorkbenchError::IllegalTransition { from, to });
        }
        if from != to {
            let t = Transition { seq: self.transitions.len() as u64, from, to, reason: reason.into() };
            if let Some(obs) = &self.observer {
                obs(&t);
            }
            self.transitions.push(t);
            self.phase = to;
        }
        Ok(())
    }

    fn not_executing(&self) -> Result<()> {
        if self.phase == Phase::Executing {
            Err(WorkbenchError::Busy)
        } else {
            Ok(())
        }
    }

    pub fn status(&self) -> SessionStatus {
        SessionStatus {
            id: self.id,
            phase: self.phase,
            transitions: self.transitions.clone(),
            classes: self.registry.snapshot().classes().iter().map(|c| c.name.clone()).collect(),
            objects: self.scene.objects.clone(),
            paths: self
                .paths
                .values()
                .map(|p| PathSummary {
                    id: p.id,
                    kind: p.kind,
                    strokes: p.strokes.len(),
                    points: p.strokes.iter().map(Vec::len).sum(),
                    length: p.length(),
                })
                .collect(),
            pairings: self.pairings.clone(),
            telemetry_frames: self.telemetry.len(),
            last_run: self.last_run.clone(),
        }
    }

    /// Extracts features from every patch and stores their mean as a new class.
    pub fn teach_object(&mut self, name: &str, patches: &[GrayImage]) -> Result<ClassRecord> {
        self.not_executing()?;
        self.transition(Phase::Teaching, &format!("teaching {name:?}"))?;
        let result = self.registry.update(|reg| {
            let mut session = reg.begin_teaching(name, patches.len().max(1))?;
            for p in patches {
                session.add_sample(&toy_extract(p))?;
            }
            reg.finalize_class(session)
        });
        self.transition(Phase::Detection, "teaching finished")?;
        Ok(result?)
    }

    /// Teaches a scene object from simulated demonstration views.
    pub fn teach_from_scene(&mut self, object: &str, samples: Option<usize>) -> Result<ClassRecord> {
        let i = self.scene.object_index(object).ok_or_else(|| WorkbenchError::UnknownObject(object.into()))?;
        let count = samples.unwrap_or(DEFAULT_TARGET_SAMPLES);
        let seed = self.scenario.seed.wrapping_add(1 + i as u64);
        let views = self.scene.demonstrations(i, count, self.scenario.camera.image_noise, seed);
        self.teach_object(object, &views)
    }

    pub fn remove_class(&mut self, name: &str) -> Result<()> {
        self.not_executing()?;
        self.registry.update(|reg| reg.remove_class(name).map(|_| ()))?;
        Ok(())
    }

    /// Classifies every ground-truth proposal of the scene image.
    pub fn detect_objects(&mut self) -> Result<Vec<Detection>> {
        self.not_executing()?;
        self.transition(Phase::Detection, "detection requested")?;
        let reg = self.registry.snapshot();
        let found = self
            .scene
            .objects
            .iter()
            .map(|o| {
                let feature = toy_extract(&self.scene.crop(o.bbox));
                let result = reg.classify_with(&feature, &self.classify_options)?;
                Ok(Detection { bbox: o.bbox, truth: o.name.clone(), result })
            })
            .collect::<Result<Vec<_>>>()?;
        self.detections = found.clone();
        Ok(found)
    }

    fn frames_for(&self, stroke: &Stroke2D) -> Result<Vec<PathFrame>> {
        let path = project_stroke(stroke, &self.scene.cloud, &self.scene.camera, &self.scene.normals)
            .map_err(|e| locate(e, &self.scene.camera, None))?;
        let path = smooth_path(&path, self.scenario.execution.smoothing)?;
        let path = downsample_path(&path, self.scenario.execution.min_spacing)?;
        if path.len() < 2 {
            return Err(WorkbenchError::InvalidInput("stroke collapses to a single point".into()));
        }
        path_frames(&path).map_err(|e| locate(e, &self.scene.camera, Some(&path)))
    }

    fn store(&mut self, kind: PathKind, source: Vec<Stroke2D>, strokes: Vec<Vec<PathFrame>>) -> Result<u64> {
        self.not_executing()?;
        self.transition(Phase::PathSpec, "path defined")?;
        let id = self.next_path;
        self.next_path += 1;
        self.paths.insert(id, StoredPath { id, kind, source, strokes });
        Ok(id)
    }

    pub fn define_path(&mut self, stroke: Stroke2D) -> Result<u64> {
        self.not_executing()?;
        if stroke.len() < 2 {
            return Err(WorkbenchError::InvalidInput("a path stroke needs at least two pixels".into()));
        }
        let frames = self.frames_for(&stroke)?;
        self.store(PathKind::Stroke, vec![stroke], vec![frames])
    }

    /// Serpentine coverage of a polygon; strokes too short to frame are skipped.
    pub fn define_area(&mut self, polygon: Stroke2D, spacing: f64) -> Result<u64> {
        self.not_executing()?;
        let scans = area_to_strokes(&polygon, spacing)?;
        let mut source = Vec::new();
        let mut strokes = Vec::new();
        for s in scans {
            match self.frames_for(&s) {
                Ok(f) => {
                    source.push(s);
                    strokes.push(f);
                }
                Err(WorkbenchError::InvalidInput(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        if strokes.is_empty() {
            return Err(WorkbenchError::InvalidInput("area contains no usable scan stroke".into()));
        }
        self.store(PathKind::Area, source, strokes)
    }

    pub fn delete_path(&mut self, id: u64) -> Result<()> {
        self.not_executing()?;
        self.paths.remove(&id).ok_or(WorkbenchError::UnknownPath(id))?;
        self.pairings.remove(&id);
        self.plans.remove(&id);
        self.transition(Phase::PathSpec, "path deleted")
    }

    /// Pairs a path with a scene object or taught class; re-pairing replaces.
    pub fn pair_path(&mut self, id: u64, object: &str) -> Result<()> {
        self.not_executing()?;
        self.path(id)?;
        let known = self.scene.object_index(object).is_some() || self.registry.snapshot().get(object).is_some();
        if !known {
            return Err(WorkbenchError::UnknownObject(object.into()));
        }
        self.pairings.insert(id, object.into());
        self.transition(Phase::PathSpec, "path paired")
    }

    pub fn unpair_path(&mut self, id: u64) -> Result<()> {
        self.not_executing()?;
        self.path(id)?;
        self.pairings.remove(&id);
        self.transition(Phase::PathSpec, "path unpaired")
    }

    /// Plans the transits and sweeps damped least-squares IK along every
    /// waypoint from the current posture.
    pub fn check_reachability(&mut self, id: u64) -> Result<Reachability> {
        self.not_executing()?;
        let path = self.path(id)?;
        let ex = &self.scenario.execution;
        let clearance = Clearance { approach: ex.approach_height, lift: ex.lift_height };
        let (r, plan) = plan_strokes(&self.model, &self.state.q, &path.strokes, clearance)?;
        match plan {
            Some(p) => self.plans.insert(id, p),
            None => self.plans.remove(&id),
        };
        self.transition(Phase::PathSpec, "reachability checked")?;
        Ok(r)
    }

    /// Plan of the latest successful reachability check.
    pub fn plan(&self, id: u64) -> Option<&Plan> {
        self.plans.get(&id)
    }

    /// Runs a paired, reachable path to completion or fault.
    pub fn execute<F>(&mut self, id: u64, on_frame: F) -> Result<RunReport>
    where
        F: FnMut(&TelemetryFrame) -> bool,
    {
        let plan = self.begin_execution(id)?;
        self.run_execution(id, &plan, on_frame)
    }

    /// Checks that `id` can run, re-plans it and enters Executing.
    pub fn begin_execution(&mut self, id: u64) -> Result<Plan> {
        if self.phase != Phase::PathSpec {
            return Err(WorkbenchError::IllegalTransition { from: self.phase, to: Phase::Executing });
        }
        self.path(id)?;
        if !self.pairings.contains_key(&id) {
            return Err(WorkbenchError::NotPaired(id));
        }
        if let Reachability::Unreachable { index } = self.check_reachability(id)? {
            return Err(WorkbenchError::Unreachable { path: id, index });
        }
        let plan = self.plans[&id].clone();
        self.transition(Phase::Executing, &format!("executing path {id}"))?;
        self.telemetry.clear();
        Ok(plan)
    }

    /// Runs a plan returned by [`Session::begin_execution`] and leaves
    /// Executing for Done or Fault.
    pub fn run_execution<F>(&mut self, id: u64, plan: &Plan, mut on_frame: F) -> Result<RunReport>
    where
        F: FnMut(&TelemetryFrame) -> bool,
    {
        if self.phase != Phase::Executing {
            return Err(WorkbenchError::IllegalTransition { from: self.phase, to: Phase::Executing });
        }
        self.path(id)?;
        let sc = &self.scenario;
        let setup = RunSetup {
            model: &self.model,
            start: self.state.clone(),
            surface: &self.scene.surface,
            gains: sc.gains.clone(),
            critical_damping: true,
            limits: sc.torque_limits(),
            exec: &sc.execution,
            noise_sigma: if sc.execution.sensor_noise { sc.arm.torque_noise } else { 0.0 },
            seed: sc.seed.wrapping_add(self.runs),
        };
        let telemetry = &mut self.telemetry;
        let report = run_plan(setup, plan, |f| {
            telemetry.push(f.clone());
            on_frame(f)
        });
        self.runs += 1;
        let report = match report {
            Ok(r) => r,
            Err(e) => {
                self.transition(Phase::Fault, &format!("run error: {e}"))?;
                return Err(e);
            }
        };
        self.state = JointState { q: DVector::from_vec(report.final_q.clone()), qd: DVector::from_vec(report.final_qd.clone()) };
        match &report.outcome {
            Outcome::Completed => self.transition(Phase::Done, "path completed")?,
            Outcome::Fault { reason, .. } => self.transition(Phase::Fault, reason)?,
            Outcome::Aborted { .. } => self.transition(Phase::Fault, "run aborted")?,
        }
        self.last_run = Some(report.clone());
        Ok(report)
    }
}
