use nalgebra::{DVector, Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{DynamicsError, Result};

/// One revolute joint: its frame sits at `parent` relative to the previous
/// joint frame (or the base) and rotates about `axis` in its own frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub parent: Isometry3<f64>,
    pub axis: Vector3<f64>,
    /// Lower and upper joint limits in radians.
    pub limits: (f64, f64),
    /// Viscous friction in N·m·s/rad.
    pub friction: f64,
}

/// Rigid link carried by the joint of the same index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub mass: f64,
    /// Center of mass in the joint frame.
    pub com: Vector3<f64>,
    /// Inertia about the center of mass, joint-frame axes.
    pub inertia: Matrix3<f64>,
}

impl Link {
    /// Solid cylinder of the given mass, radius and length centred on `com`
    /// with its long axis along joint-frame z.
    pub fn cylinder(mass: f64, radius: f64, length: f64, com: Vector3<f64>) -> Self {
        let ixx = mass * (3.0 * radius * radius + length * length) / 12.0;
        let izz = mass * radius * radius / 2.0;
        Self {
            mass,
            com,
            inertia: Matrix3::from_diagonal(&Vector3::new(ixx, ixx, izz)),
        }
    }

    pub fn point_mass(mass: f64, com: Vector3<f64>) -> Self {
        Self {
            mass,
            com,
            inertia: Matrix3::zeros(),
        }
    }
}

/// Serial chain of revolute joints with a rigid tool at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub joints: Vec<Joint>,
    pub links: Vec<Link>,
    /// Last joint frame to tool (end-effector) frame.
    pub tool: Isometry3<f64>,
    pub gravity: Vector3<f64>,
}

fn at(x: f64, y: f64, z: f64) -> Isometry3<f64> {
    Isometry3::from_parts(Translation3::new(x, y, z), UnitQuaternion::identity())
}

impl ArmModel {
    pub fn new(
        joints: Vec<Joint>,
        links: Vec<Link>,
        tool: Isometry3<f64>,
        gravity: Vector3<f64>,
    ) -> Result<Self> {
        let model = Self {
            joints,
            links,
            tool,
            gravity,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.joints.len();
        if !(1..=7).contains(&n) {
            return Err(DynamicsError::InvalidInput(format!(
                "joint count must be 1..=7, got {n}"
            )));
        }
        if self.links.len() != n {
            return Err(DynamicsError::InvalidInput(format!(
                "{n} joints but {} links",
                self.links.len()
            )));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(DynamicsError::InvalidInput(format!(
                    "joint {i} axis is not unit length"
                )));
            }
            if !(j.limits.0 < j.limits.1) {
                return Err(DynamicsError::InvalidInput(format!(
                    "joint {i} limits are empty"
                )));
            }
            if !(j.friction >= 0.0) {
                return Err(DynamicsError::InvalidInput(format!(
                    "joint {i} friction is negative"
                )));
            }
        }
        for (i, l) in self.links.iter().enumerate() {
            if !(l.mass > 0.0) {
                return Err(DynamicsError::InvalidInput(format!(
                    "link {i} mass must be positive"
                )));
            }
            if (l.inertia - l.inertia.transpose()).norm() > 1e-12 {
                return Err(DynamicsError::InvalidInput(format!(
                    "link {i} inertia is not symmetric"
                )));
            }
            // Point masses are allowed (zero inertia); anything else must be PD.
            if l.inertia != Matrix3::zeros() && l.inertia.cholesky().is_none() {
                return Err(DynamicsError::InvalidInput(format!(
                    "link {i} inertia is not positive definite"
                )));
            }
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(DynamicsError::InvalidInput("gravity must be finite".into()));
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn check_dim(&self, v: &DVector<f64>, what: &str) -> Result<()> {
        if v.len() != self.dof() {
            return Err(DynamicsError::InvalidInput(format!(
                "{what} has {} entries, model has {} joints",
                v.len(),
                self.dof()
            )));
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(DynamicsError::InvalidInput(format!("{what} is not finite")));
        }
        Ok(())
    }

    pub fn lower_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.limits.0))
    }

    pub fn upper_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.limits.1))
    }

    pub fn within_limits(&self, q: &DVector<f64>) -> bool {
        q.iter()
            .zip(&self.joints)
            .all(|(&x, j)| x >= j.limits.0 && x <= j.limits.1)
    }

    /// Generic 7-DOF arm with alternating z/y axes and iiwa-like proportions:
    /// shoulder at 0.34 m, two 0.40 m segments and a 0.126 m flange, plus a
    /// `tool_length` extension along the flange axis. The last link lumps the
    /// flange with a 0.5 kg tool spread over its length.
    pub fn seven_dof(tool_length: f64) -> Self {
        let deg = std::f64::consts::PI / 180.0;
        let offsets = [0.0, 0.34, 0.20, 0.20, 0.20, 0.20, 0.0];
        let limits = [170.0, 120.0, 170.0, 120.0, 170.0, 120.0, 175.0];
        let masses = [4.0, 4.0, 3.0, 2.7, 1.7, 1.8, 0.8];
        // Segment each link spans (joint frame z), used for its CoM and inertia.
        let spans: [f64; 7] = [0.34, 0.20, 0.20, 0.20, 0.20, 0.12, 0.126 + tool_length];
        let mut joints = Vec::with_capacity(7);
        let mut links = Vec::with_capacity(7);
        for i in 0..7 {
            let axis = if i % 2 == 0 {
                Vector3::z()
            } else {
                Vector3::y()
            };
            joints.push(Joint {
                parent: at(0.0, 0.0, offsets[i]),
                axis,
                limits: (-limits[i] * deg, limits[i] * deg),
                friction: 0.2,
            });
            let len = spans[i].max(0.06);
            let com = Vector3::new(0.0, 0.0, if i == 0 { 0.0 } else { spans[i] / 2.0 });
            links.push(Link::cylinder(masses[i], 0.06, len, com));
        }
        Self {
            joints,
            links,
            tool: at(0.0, 0.0, 0.126 + tool_length),
            gravity: Vector3::new(0.0, 0.0, -9.81),
        }
    }

    /// Single revolute joint about base z with a point mass at `(length, 0, 0)`.
    pub fn pendulum(mass: f64, length: f64, axis: Vector3<f64>, gravity: Vector3<f64>) -> Self {
        Self {
            joints: vec![Joint {
                parent: Isometry3::identity(),
                axis,
                limits: (-100.0, 100.0),
                friction: 0.0,
            }],
            links: vec![Link::point_mass(mass, Vector3::new(length, 0.0, 0.0))],
            tool: at(length, 0.0, 0.0),
            gravity,
        }
    }

    /// Planar arm in the x-y plane rotating about z, with point masses at the
    /// end of each segment (gravity along -y).
    pub fn planar(masses: &[f64], lengths: &[f64]) -> Self {
        let n = masses.len();
        let joints = (0..n)
            .map(|i| Joint {
                parent: at(if i == 0 { 0.0 } else { lengths[i - 1] }, 0.0, 0.0),
                axis: Vector3::z(),
                limits: (-100.0, 100.0),
                friction: 0.0,
            })
            .collect();
        let links = (0..n)
            .map(|i| Link::point_mass(masses[i], Vector3::new(lengths[i], 0.0, 0.0)))
            .collect();
        Self {
            joints,
            links,
            tool: at(lengths[n - 1], 0.0, 0.0),
            gravity: Vector3::new(0.0, -9.81, 0.0),
        }
    }

    pub fn without_friction(mut self) -> Self {
        for j in &mut self.joints {
            j.friction = 0.0;
        }
        self
    }

    pub fn without_gravity(mut self) -> Self {
        self.gravity = Vector3::zeros();
        self
    }
}

/// Joint positions and velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

impl JointState {
    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            qd: DVector::zeros(n),
        }
    }
}
