//! Serial revolute-chain robot model.
//!
//! A model is a fixed base followed by `n` single-axis revolute joints.
//! Frames are chained as
//!
//! ```text
//! pose[0] = base_pose
//! pose[i] = pose[i-1] * Rot(axis_i, q_i) * origin_offset_i
//! ```
//!
//! so joint `i` swings about the parent frame origin and `origin_offset`
//! then carries the rotated frame out to the far end of link `i`. With unit
//! x-offsets this makes a two-joint planar chain reach (2, 0, 0) at rest and
//! (0, 2, 0) after a quarter turn of the first joint, which is the easiest
//! convention to sanity-check by hand.

use nalgebra::{DVector, Unit};
use thiserror::Error;

use crate::geom::{Pose, Shape, UnitQuat, Vector3};

/// Joint vector; length must match the model's degree-of-freedom count.
pub type RobotConfig = DVector<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum RobotError {
    #[error("configuration has {got} joints, model has {expected}")]
    DofMismatch { expected: usize, got: usize },
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
}

/// One revolute joint: rotation axis in the parent frame, the rigid offset
/// to this link's frame, and position/velocity limits in rad and rad/s.
#[derive(Clone, Debug)]
pub struct JointSpec {
    pub axis: Unit<Vector3>,
    pub origin_offset: Pose,
    pub limits: [f64; 2],
    pub velocity_limits: [f64; 2],
}

impl JointSpec {
    pub fn new(axis: Vector3, origin_offset: Pose, limits: [f64; 2], velocity_limits: [f64; 2]) -> Result<Self, RobotError> {
        let n = axis.norm();
        if !n.is_finite() || n < 1e-9 {
            return Err(RobotError::InvalidModel("joint axis must be a nonzero vector".into()));
        }
        if limits[0] > limits[1] || velocity_limits[0] > velocity_limits[1] {
            return Err(RobotError::InvalidModel("joint limits must be ordered lo <= hi".into()));
        }
        if !limits.iter().chain(&velocity_limits).all(|x| x.is_finite()) {
            return Err(RobotError::InvalidModel("joint limits must be finite".into()));
        }
        Ok(JointSpec { axis: Unit::new_normalize(axis), origin_offset, limits, velocity_limits })
    }
}

/// Where the sensing camera rides: a link index (0 is the static base) and
/// its local transform on that link.
#[derive(Clone, Debug)]
pub struct CameraMount {
    pub link: usize,
    pub local: Pose,
}

/// Robot: joints, collision shapes attached to links, base pose, and the
/// camera mount. Link `i` is the frame produced after joint `i`; link 0 is
/// the base itself, so a model with `n` joints has `n + 1` links.
#[derive(Clone, Debug)]
pub struct RobotModel {
    joints: Vec<JointSpec>,
    link_shapes: Vec<(usize, Shape)>,
    pub base_pose: Pose,
    pub camera_mount: CameraMount,
}

impl RobotModel {
    pub fn new(
        joints: Vec<JointSpec>,
        link_shapes: Vec<(usize, Shape)>,
        base_pose: Pose,
        camera_mount: CameraMount,
    ) -> Result<Self, RobotError> {
        if joints.is_empty() {
            return Err(RobotError::InvalidModel("a robot needs at least one joint".into()));
        }
        let n_links = joints.len() + 1;
        for (link, _) in &link_shapes {
            if *link >= n_links {
                return Err(RobotError::InvalidModel(format!(
                    "shape references link {link}, model has links 0..{}",
                    n_links - 1
                )));
            }
        }
        if camera_mount.link >= n_links {
            return Err(RobotError::InvalidModel(format!(
                "camera mounted on link {}, model has links 0..{}",
                camera_mount.link,
                n_links - 1
            )));
        }
        Ok(RobotModel { joints, link_shapes, base_pose, camera_mount })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn n_links(&self) -> usize {
        self.joints.len() + 1
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn link_shapes(&self) -> &[(usize, Shape)] {
        &self.link_shapes
    }

    pub fn joint_limits(&self, dof: usize) -> [f64; 2] {
        self.joints[dof].limits
    }

    pub fn velocity_limits(&self, dof: usize) -> [f64; 2] {
        self.joints[dof].velocity_limits
    }

    fn check_dof(&self, q: &[f64]) -> Result<(), RobotError> {
        if q.len() != self.joints.len() {
            return Err(RobotError::DofMismatch { expected: self.joints.len(), got: q.len() });
        }
        Ok(())
    }

    /// World pose of every link, base first; `q` in radians.
    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Vec<Pose>, RobotError> {
        self.check_dof(q)?;
        let mut poses = Vec::with_capacity(self.n_links());
        poses.push(self.base_pose);
        let mut current = self.base_pose;
        for (joint, &angle) in self.joints.iter().zip(q) {
            let rot = UnitQuat::from_axis_angle(&joint.axis, angle);
            current = current * Pose::from_parts(nalgebra::Translation3::identity(), rot) * joint.origin_offset;
            poses.push(current);
        }
        Ok(poses)
    }

    /// Collision shapes in world coordinates at configuration `q`. Output
    /// order matches `link_shapes()`, one entry per stored shape.
    pub fn link_geometry_world(&self, q: &[f64]) -> Result<Vec<Shape>, RobotError> {
        let poses = self.forward_kinematics(q)?;
        Ok(self.link_shapes.iter().map(|(link, shape)| shape.transformed(&poses[*link])).collect())
    }

    /// World pose of the mounted camera at configuration `q`.
    pub fn camera_pose(&self, q: &[f64]) -> Result<Pose, RobotError> {
        let poses = self.forward_kinematics(q)?;
        Ok(poses[self.camera_mount.link] * self.camera_mount.local)
    }

    /// Clamps a configuration into the joint position limits.
    pub fn clamp_config(&self, q: &mut RobotConfig) {
        for (i, joint) in self.joints.iter().enumerate() {
            q[i] = q[i].clamp(joint.limits[0], joint.limits[1]);
        }
    }

    /// True when every coordinate respects the position limits.
    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.joints.len()
            && self.joints.iter().zip(q).all(|(j, &x)| x >= j.limits[0] && x <= j.limits[1])
    }
}
