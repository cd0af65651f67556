//! Motion planning for a robot arm that watches a human through its own
//! head-mounted camera.
//!
//! The arm can block its camera's view of the person it must avoid. This
//! library couples a geometric visibility model with trajectory optimization
//! so that planned motions keep the human visible, keep the skeleton tracker
//! fed, and therefore keep the motion predictions the collision costs depend
//! on trustworthy.
//!
//! Module map:
//!
//! * [`geom`]: capsule/box primitives and penetration-depth queries
//! * [`robot`]: serial revolute chains, forward kinematics, mounted camera
//! * [`human`]: 23-joint skeleton frames, sequences, capsule bodies
//! * [`occlusion`]: camera model, ray-sampled joint visibility, frame labels
//! * [`predict`]: per-joint constant-velocity Kalman prediction
//! * [`traj`]: cubic Hermite waypoint trajectories and limit checks
//! * [`cost`]: smoothness, collision, and visibility cost functionals
//! * [`plan`]: trajectory optimizer and the fixed-cadence replanning loop
//! * [`augment`]: offline relabeling of skeleton datasets with virtual robots
//! * [`scenario`]: declarative scenario files tying all of the above together
//! * [`sim`]: scenario execution harness producing run traces

pub mod augment;
pub mod cost;
pub mod geom;
pub mod human;
pub mod occlusion;
pub mod plan;
pub mod predict;
pub mod robot;
pub mod scenario;
pub mod seeding;
pub mod sim;
pub mod synth;
pub mod traj;

// pub use cost::{CostReport, CostWeights, Quadrature, Scene};
// pub use geom::{Capsule, OrientedBox, Point3, Pose, Segment, Shape, Vector3};
// pub use human::{HumanCapsuleBody, SkeletonFrame, SkeletonSequence, JOINT_COUNT};
// pub use occlusion::{ActionKind, CameraIntrinsics, CameraModel, OcclusionReport, VisParams};
// pub use plan::{PlanResult, PlannerParams};
// pub use predict::{CvKalmanPredictor, MotionPredictor, PredictedHuman, PredictionHorizon};
// pub use robot::{JointSpec, RobotConfig, RobotModel};
// pub use scenario::Scenario;
// pub use traj::{Trajectory, Waypoint};
