//! Versioned TOML scenario describing arm, surface, camera, gains and objects.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use surfteach_core::classifier::{read_gray_png, GrayImage};
use surfteach_core::contact::SurfaceParams;
use surfteach_core::control::{ControlGains, GainWarning, SpeedProfile};
use surfteach_core::dynamics::{ArmModel, Joint, JointState, Link};
use surfteach_core::geometry::{read_depth_png, CameraModel, DepthImage, Primitive};
use surfteach_core::sim::DEFAULT_TORQUE_NOISE;

use crate::textures::Texture;

pub const SCHEMA_VERSION: u32 = 1;

/// Ready posture of the default arm: tool pointing down at about (0.55, 0, 0.35).
pub const READY_POSTURE: [f64; 7] = [0.0, 0.44, 0.0, 1.45, 0.0, 1.25, 1.571];
pub const DEFAULT_TORQUE_LIMITS: [f64; 7] = [320.0, 320.0, 176.0, 176.0, 110.0, 40.0, 40.0];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario field `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported scenario version {0} (expected {SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
    #[error("scenario field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("reading {path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn invalid(field: impl Into<String>, message: impl ToString) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), message: message.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    /// Seeds sensor noise, demonstrations and the camera.
    #[serde(default)]
    pub seed: u64,
    pub arm: ArmSpec,
    pub surface: SurfaceSource,
    #[serde(default)]
    pub workspace: WorkspaceSpec,
    #[serde(default)]
    pub camera: CameraSpec,
    #[serde(default)]
    pub contact: SurfaceParams,
    #[serde(default)]
    pub gains: ControlGains,
    #[serde(default)]
    pub execution: ExecutionSpec,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    /// Directory that relative file references resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmKind {
    #[default]
    SevenDof,
    Custom,
}

fn default_tool_length() -> f64 {
    0.1
}

fn default_noise() -> f64 {
    DEFAULT_TORQUE_NOISE
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    #[serde(default)]
    pub model: ArmKind,
    /// Tool extension beyond the flange (m), default arm only.
    #[serde(default = "default_tool_length")]
    pub tool_length: f64,
    /// Chain description, custom arm only.
    #[serde(default)]
    pub joints: Vec<JointSpec>,
    /// Last joint frame to tool point (m), custom arm only.
    #[serde(default)]
    pub tool_offset: [f64; 3],
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    /// Initial joint angles (rad); the ready posture for the default arm.
    #[serde(default)]
    pub home: Option<Vec<f64>>,
    /// Per-joint saturation (N·m).
    #[serde(default)]
    pub torque_limits: Option<Vec<f64>>,
    /// Joint-torque sensor noise standard deviation (N·m).
    #[serde(default = "default_noise")]
    pub torque_noise: f64,
}

fn default_friction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    /// Joint frame origin in the parent frame (m).
    pub origin: [f64; 3],
    pub axis: [f64; 3],
    /// Lower and upper limit (rad).
    pub limits: [f64; 2],
    #[serde(default = "default_friction")]
    pub friction: f64,
    pub mass: f64,
    pub com: [f64; 3],
    /// Principal moments about the CoM (kg·m²).
    pub inertia: [f64; 3],
}

fn default_depth_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSource {
    Plane {
        z: f64,
    },
    SphereCap {
        cx: f64,
        cy: f64,
        base_z: f64,
        radius: f64,
        cap_height: f64,
    },
    Wave {
        base_z: f64,
        amplitude: f64,
        wavelength: f64,
    },
    /// Recorded 16-bit millimeter depth PNG seen through `camera`.
    DepthImage {
        file: PathBuf,
        /// Multiplier applied to the decoded depth.
        #[serde(default = "default_depth_scale")]
        scale: f64,
    },
}

impl SurfaceSource {
    pub fn primitive(&self) -> Option<Primitive> {
        match *self {
            SurfaceSource::Plane { z } => Some(Primitive::Plane { z }),
            SurfaceSource::SphereCap { cx, cy, base_z, radius, cap_height } => {
                Some(Primitive::SphereCap { cx, cy, base_z, radius, cap_height })
            }
            SurfaceSource::Wave { base_z, amplitude, wavelength } => {
                Some(Primitive::Wave { base_z, amplitude, wavelength })
            }
            SurfaceSource::DepthImage { .. } => None,
        }
    }
}

/// Table extent simulated as contact surface (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkspaceSpec {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    /// Height-field cell size for analytic surfaces (m).
    pub resolution: f64,
}

impl Default for WorkspaceSpec {
    fn default() -> Self {
        Self { x_range: [0.2, 0.9], y_range: [-0.35, 0.35], resolution: 0.001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    /// Principal point; the image centre when absent.
    pub cx: Option<f64>,
    pub cy: Option<f64>,
    /// Sensor origin in the base frame (m).
    pub position: [f64; 3],
    /// Sensor-to-base rotation, row major; looking straight down when absent.
    pub rotation: Option<[[f64; 3]; 3]>,
    /// Depth quantization step of the simulated sensor (m).
    pub quantization: f64,
    /// Integral-normal smoothing half window (pixels).
    pub half_window: usize,
    /// Uniform gray-level noise amplitude of the scene image.
    pub image_noise: u8,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            fx: 525.0,
            fy: 525.0,
            cx: None,
            cy: None,
            position: [0.55, 0.0, 1.0],
            rotation: None,
            quantization: 0.002,
            half_window: 5,
            image_noise: 8,
        }
    }
}

impl CameraSpec {
    pub fn model(&self) -> Result<CameraModel, ScenarioError> {
        let cx = self.cx.unwrap_or((self.width as f64 - 1.0) / 2.0);
        let cy = self.cy.unwrap_or((self.height as f64 - 1.0) / 2.0);
        let position = Vector3::from(self.position);
        let cam = match self.rotation {
            None => CameraModel::looking_down(self.fx, self.fy, cx, cy, position),
            Some(rows) => {
                let r = Matrix3::from_fn(|i, j| rows[i][j]);
                CameraModel::extrinsic_from_matrix(position, r)
                    .and_then(|iso| CameraModel::new(self.fx, self.fy, cx, cy, iso))
            }
        };
        cam.map_err(|e| invalid("camera", e))
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutionSpec {
    /// Control period (s).
    pub dt: f64,
    pub speed: SpeedProfile,
    /// Height above the first point where the approach ends (m).
    pub approach_height: f64,
    /// Lift along +n between area strokes (m).
    pub lift_height: f64,
    /// Depth below the surface commanded while searching for contact (m).
    pub press_depth: f64,
    /// Estimated normal force that confirms touch (N).
    pub touch_force: f64,
    /// Hold time with the force loop on before tracking (s).
    pub settle: f64,
    /// Extra time at the final point (s).
    pub dwell: f64,
    /// Telemetry decimation (s).
    pub telemetry_period: f64,
    /// Record every control tick instead.
    pub full_rate: bool,
    /// Continuous saturation or contact loss that raises a fault (s).
    pub fault_window: f64,
    /// Minimum spacing of downsampled path points (m).
    pub min_spacing: f64,
    /// Arc-length window of the moving average applied to projected paths (m).
    pub smoothing: f64,
    /// Time limit for reaching the surface during descent (s).
    pub descent_timeout: f64,
    /// Add joint-torque sensor noise.
    #[serde(default = "default_true")]
    pub sensor_noise: bool,
}

impl Default for ExecutionSpec {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            speed: SpeedProfile::default(),
            approach_height: 0.02,
            lift_height: 0.02,
            press_depth: 0.02,
            touch_force: 1.0,
            settle: 0.5,
            dwell: 0.2,
            telemetry_period: 0.01,
            full_rate: false,
            fault_window: 0.5,
            min_spacing: 0.01,
            smoothing: 0.02,
            descent_timeout: 3.0,
            sensor_noise: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub name: String,
    /// Image-space box `[u0, v0, u1, v1]`, end-exclusive.
    pub bbox: [usize; 4],
    #[serde(default)]
    pub texture: Option<Texture>,
    /// Grayscale PNG with the object's appearance, resized by tiling.
    #[serde(default)]
    pub patch: Option<PathBuf>,
}

impl ObjectSpec {
    pub fn size(&self) -> (usize, usize) {
        (self.bbox[2] - self.bbox[0], self.bbox[3] - self.bbox[1])
    }
}

/// Object appearance resolved to pixels.
#[derive(Debug, Clone, PartialEq)]
pub enum Appearance {
    Texture(Texture),
    Image(GrayImage),
}

impl Appearance {
    pub fn render(&self, width: usize, height: usize) -> GrayImage {
        match self {
            Appearance::Texture(t) => t.render(width, height),
            Appearance::Image(img) => GrayImage::from_fn(width, height, |u, v| {
                img.get(u % img.width(), v % img.height())
            })
            .expect("non-empty"),
        }
    }
}

impl Scenario {
    /// Parses and validates a scenario; relative files resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ScenarioError> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| ScenarioError::Parse { path: ".".into(), message: e.to_string() })?;
        let mut scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ScenarioError::Parse { path, message: e.into_inner().message().trim().to_string() }
        })?;
        scenario.base_dir = base_dir.into();
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.version != SCHEMA_VERSION {
            return Err(ScenarioError::UnsupportedVersion(self.version));
        }
        let model = self.arm_model()?;
        let home = self.home_state()?;
        if !model.within_limits(&home.q) {
            return Err(invalid("arm.home", "outside the joint limits"));
        }
        let limits = self.torque_limits();
        if limits.len() != model.dof() || limits.iter().any(|l| !(*l > 0.0)) {
            return Err(invalid("arm.torque_limits", format!("need {} positive limits", model.dof())));
        }
        if !(self.arm.torque_noise >= 0.0 && self.arm.torque_noise.is_finite()) {
            return Err(invalid("arm.torque_noise", "must be a non-negative number"));
        }
        if let Some(p) = self.surface.primitive() {
            p.validate().map_err(|e| invalid("surface", e))?;
        }
        let ws = &self.workspace;
        if !(ws.x_range[0] < ws.x_range[1] && ws.y_range[0] < ws.y_range[1] && ws.resolution > 0.0) {
            return Err(invalid("workspace", "ranges must be increasing and resolution positive"));
        }
        self.contact.validate().map_err(|e| invalid("contact", e))?;
        self.gains.validate().map_err(|e| invalid("gains", e))?;
        let cam = &self.camera;
        if cam.width < 8 || cam.height < 8 || !(cam.quantization >= 0.0) || cam.half_window == 0 {
            return Err(invalid("camera", "image must be at least 8x8, quantization >= 0, half_window >= 1"));
        }
        cam.model()?;
        let ex = &self.execution;
        let positive = [
            ("dt", ex.dt),
            ("speed.v_max", ex.speed.v_max),
            ("speed.a_max", ex.speed.a_max),
            ("telemetry_period", ex.telemetry_period),
            ("fault_window", ex.fault_window),
            ("min_spacing", ex.min_spacing),
            ("descent_timeout", ex.descent_timeout),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("execution.{name}"), "must be positive"));
            }
        }
        let non_negative = [
            ("approach_height", ex.approach_height),
            ("lift_height", ex.lift_height),
            ("press_depth", ex.press_depth),
            ("touch_force", ex.touch_force),
            ("settle", ex.settle),
            ("dwell", ex.dwell),
            ("smoothing", ex.smoothing),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("execution.{name}"), "must be non-negative"));
            }
        }
        if let SurfaceSource::DepthImage { .. } = self.surface {
            let d = self.depth_image()?;
            if (d.width, d.height) != (cam.width, cam.height) {
                return Err(invalid(
                    "surface.file",
                    format!("depth image is {}x{}, camera is {}x{}", d.width, d.height, cam.width, cam.height),
                ));
            }
        }
        let mut names = BTreeSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            let field = format!("objects[{i}]");
            if o.name.trim().is_empty() || !names.insert(o.name.as_str()) {
                return Err(invalid(format!("{field}.name"), format!("empty or duplicate name {:?}", o.name)));
            }
            let [u0, v0, u1, v1] = o.bbox;
            if u0 >= u1 || v0 >= v1 || u1 > cam.width || v1 > cam.height || u1 - u0 < 3 || v1 - v0 < 3 {
                return Err(invalid(format!("{field}.bbox"), "box must be at least 3x3 and inside the image"));
            }
            match (&o.texture, &o.patch) {
                (Some(t), None) => t.validate().map_err(|e| invalid(format!("{field}.texture"), e))?,
                (None, Some(_)) => {
                    self.appearance(i)?;
                }
                _ => return Err(invalid(field, "exactly one of `texture` or `patch` is required")),
            }
        }
        Ok(())
    }

    pub fn arm_model(&self) -> Result<ArmModel, ScenarioError> {
        let a = &self.arm;
        let gravity = Vector3::from(a.gravity);
        let model = match a.model {
            ArmKind::SevenDof => {
                if !(a.tool_length >= 0.0 && a.tool_length.is_finite()) {
                    return Err(invalid("arm.tool_length", "must be non-negative"));
                }
                let mut m = ArmModel::seven_dof(a.tool_length);
                m.gravity = gravity;
                m
            }
            ArmKind::Custom => {
                if a.joints.is_empty() {
                    return Err(invalid("arm.joints", "a custom arm needs at least one joint"));
                }
                let at = |p: [f64; 3]| Isometry3::from_parts(Translation3::new(p[0], p[1], p[2]), UnitQuaternion::identity());
                let joints = a
                    .joints
                    .iter()
                    .map(|j| Joint {
                        parent: at(j.origin),
                        axis: Vector3::from(j.axis),
                        limits: (j.limits[0], j.limits[1]),
                        friction: j.friction,
                    })
                    .collect();
                let links = a
                    .joints
                    .iter()
                    .map(|j| Link {
                        mass: j.mass,
                        com: Vector3::from(j.com),
                        inertia: Matrix3::from_diagonal(&Vector3::from(j.inertia)),
                    })
                    .collect();
                ArmModel::new(joints, links, at(a.tool_offset), gravity).map_err(|e| invalid("arm.joints", e))?
            }
        };
        model.validate().map_err(|e| invalid("arm", e))?;
        Ok(model)
    }

    pub fn home_state(&self) -> Result<JointState, ScenarioError> {
        let model = self.arm_model()?;
        let q = match (&self.arm.home, self.arm.model) {
            (Some(q), _) => q.clone(),
            (None, ArmKind::SevenDof) => READY_POSTURE.to_vec(),
            (None, ArmKind::Custom) => vec![0.0; model.dof()],
        };
        if q.len() != model.dof() || q.iter().any(|v| !v.is_finite()) {
            return Err(invalid("arm.home", format!("need {} finite joint angles", model.dof())));
        }
        Ok(JointState::at_rest(nalgebra::DVector::from_vec(q)))
    }

    pub fn torque_limits(&self) -> Vec<f64> {
        match (&self.arm.torque_limits, self.arm.model) {
            (Some(l), _) => l.clone(),
            (None, ArmKind::SevenDof) => DEFAULT_TORQUE_LIMITS.to_vec(),
            (None, ArmKind::Custom) => vec![100.0; self.arm.joints.len()],
        }
    }

    pub fn gain_warnings(&self) -> Vec<GainWarning> {
        self.gains.validate().unwrap_or_default()
    }

    /// Recorded depth for `depth_image` surfaces, scaled to meters.
    pub fn depth_image(&self) -> Result<DepthImage, ScenarioError> {
        let SurfaceSource::DepthImage { file, scale } = &self.surface else {
            return Err(invalid("surface", "not a depth-image surface"));
        };
        let path = self.resolve(file);
        let f = std::fs::File::open(&path).map_err(|e| ScenarioError::Io { path: path.clone(), message: e.to_string() })?;
        let mut d = read_depth_png(std::io::BufReader::new(f)).map_err(|e| invalid("surface.file", e))?;
        d.depth.iter_mut().for_each(|z| *z *= scale);
        Ok(d)
    }

    pub fn appearance(&self, index: usize) -> Result<Appearance, ScenarioError> {
        let o = &self.objects[index];
        match (&o.texture, &o.patch) {
            (Some(t), _) => Ok(Appearance::Texture(t.clone())),
            (None, Some(p)) => {
                let path = self.resolve(p);
                let f = std::fs::File::open(&path)
                    .map_err(|e| ScenarioError::Io { path: path.clone(), message: e.to_string() })?;
                let img = read_gray_png(std::io::BufReader::new(f))
                    .map_err(|e| invalid(format!("objects[{index}].patch"), e))?;
                Ok(Appearance::Image(img))
            }
            (None, None) => Err(invalid(format!("objects[{index}]"), "no appearance")),
        }
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Scenario::from_toml(&text, base)
}
