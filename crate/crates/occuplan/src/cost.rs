//! Trajectory cost terms and the weighted planning objective.
//!
//! Four functionals are integrated over a candidate trajectory and combined
//! into one objective: joint-velocity smoothness, squared penetration against
//! static obstacles, squared penetration against the predicted human, and a
//! penalty for occluding the camera's view of that human. Every term is a
//! time average `(1/T) * integral`, evaluated by composite Simpson quadrature
//! on a per-segment grid shared by all terms.
//!
//! Evaluation is deterministic: the occlusion term's ray sampling derives its
//! randomness from a scene seed mixed with the grid position, never from the
//! candidate configuration, so finite-difference probes see a smooth function
//! of the waypoints rather than sampling noise.

use nalgebra::DVector;
use thiserror::Error;

use crate::geom::{Point3, Shape};
use crate::human::{build_capsule_body, HumanCapsuleBody, HumanError, SkeletonFrame, JOINT_COUNT};
use crate::occlusion::{occlusion_report, CameraIntrinsics, CameraModel, VisParams};
use crate::predict::PredictedHuman;
use crate::robot::{RobotError, RobotModel};
use crate::seeding;
use crate::traj::{TrajError, Trajectory};

#[derive(Debug, Error)]
pub enum CostError {
    #[error("weight {0} must be non-negative and finite")]
    BadWeight(&'static str),
    #[error("joint weight vector has {got} entries, robot has {expected} dofs")]
    JointWeightLen { expected: usize, got: usize },
    #[error("joint weight {index} is negative")]
    JointWeightNegative { index: usize },
    #[error("Simpson quadrature needs an even interval count of at least 2, got {0}")]
    BadQuadrature(usize),
    #[error("box robot links combined with box obstacles are unsupported; model one side with capsules")]
    BoxBoxPair,
    #[error("obstacle margin {0} must be non-negative and finite")]
    BadMargin(f64),
    #[error("prediction covers [{have0}, {have1}] but the trajectory spans [{t0}, {t1}]")]
    HumanCoverage { t0: f64, t1: f64, have0: f64, have1: f64 },
    #[error("trajectory knot times do not match the evaluation grid")]
    TimesMismatch,
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error(transparent)]
    Human(#[from] HumanError),
}

/// Composite Simpson rule, applied per trajectory segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub intervals_per_segment: usize,
}

impl Quadrature {
    pub fn new(intervals_per_segment: usize) -> Result<Self, CostError> {
        if intervals_per_segment < 2 || intervals_per_segment % 2 != 0 {
            return Err(CostError::BadQuadrature(intervals_per_segment));
        }
        Ok(Quadrature { intervals_per_segment })
    }
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature { intervals_per_segment: 16 }
    }
}

/// Term weights plus the per-dof diagonal for the smoothness integrand.
#[derive(Clone, Debug, PartialEq)]
pub struct CostWeights {
    pub smoothness: f64,
    pub static_collision: f64,
    pub human_collision: f64,
    pub occlusion: f64,
    /// Diagonal of the velocity metric; one non-negative entry per dof.
    pub joint_weights: DVector<f64>,
}

impl CostWeights {
    /// Stock weighting: collisions dominate, occlusion matters, smoothness
    /// breaks ties. Unit velocity metric.
    pub fn standard(dof: usize) -> Self {
        CostWeights {
            smoothness: 1.0,
            static_collision: 100.0,
            human_collision: 100.0,
            occlusion: 10.0,
            joint_weights: DVector::from_element(dof, 1.0),
        }
    }

    pub fn validate(&self, dof: usize) -> Result<(), CostError> {
        for (value, name) in [
            (self.smoothness, "smoothness"),
            (self.static_collision, "static_collision"),
            (self.human_collision, "human_collision"),
            (self.occlusion, "occlusion"),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(CostError::BadWeight(name));
            }
        }
        if self.joint_weights.len() != dof {
            return Err(CostError::JointWeightLen { expected: dof, got: self.joint_weights.len() });
        }
        if let Some(index) = self.joint_weights.iter().position(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(CostError::JointWeightNegative { index });
        }
        Ok(())
    }
}

/// The predicted human as a cost obstacle: horizon prediction plus the
/// capsule construction parameters.
#[derive(Clone, Debug)]
pub struct HumanPrediction {
    pub predicted: PredictedHuman,
    pub bone_pairs: Vec<(usize, usize)>,
    /// Capsule radius at zero confidence, meters.
    pub r0: f64,
    /// Capsule radius at full confidence, meters.
    pub r1: f64,
}

/// Everything a cost evaluation sees besides the candidate trajectory.
#[derive(Clone, Debug)]
pub struct Scene {
    pub robot: RobotModel,
    pub obstacles: Vec<Shape>,
    pub intrinsics: CameraIntrinsics,
    pub human: Option<HumanPrediction>,
    /// Ray budget for the occlusion integrand; fewer rays than the sensing
    /// side is usual since this runs inside the optimizer's inner loop.
    pub vis: VisParams,
    pub seed: u64,
    pub quadrature: Quadrature,
    /// Static obstacles are inflated by this much, in meters, inside the
    /// collision integrand. A soft penalty settles where the obstacle push
    /// balances the other terms, which is always in slight contact with the
    /// costed surface; the margin puts that equilibrium at a true clearance
    /// instead of a true penetration. Safety checks use the raw shapes.
    pub obstacle_margin: f64,
}

impl Scene {
    pub fn validate(&self) -> Result<(), CostError> {
        Quadrature::new(self.quadrature.intervals_per_segment)?;
        if !(self.obstacle_margin >= 0.0 && self.obstacle_margin.is_finite()) {
            return Err(CostError::BadMargin(self.obstacle_margin));
        }
        let robot_has_box = self
            .robot
            .link_shapes()
            .iter()
            .any(|(_, s)| matches!(s, Shape::Box(_)));
        let obstacle_box = self.obstacles.iter().any(|s| matches!(s, Shape::Box(_)));
        if robot_has_box && obstacle_box {
            return Err(CostError::BoxBoxPair);
        }
        Ok(())
    }

    /// Builds the evaluation grid for trajectories with these knot times.
    /// Everything that does not depend on the robot configuration (human
    /// bodies, ray targets, node seeds) is computed here once.
    pub fn context(&self, knot_times: &[f64]) -> Result<CostContext<'_>, CostError> {
        self.validate()?;
        if knot_times.len() < 2 {
            return Err(CostError::Traj(TrajError::TooFewWaypoints(knot_times.len())));
        }
        let t0 = knot_times[0];
        let t_end = knot_times[knot_times.len() - 1];
        if let Some(human) = &self.human {
            if !human.predicted.covers(t0, t_end) {
                return Err(CostError::HumanCoverage {
                    t0,
                    t1: t_end,
                    have0: human.predicted.start_time(),
                    have1: human.predicted.end_time(),
                });
            }
        }
        let n = self.quadrature.intervals_per_segment;
        let mut segments = Vec::with_capacity(knot_times.len() - 1);
        for (seg, pair) in knot_times.windows(2).enumerate() {
            let h = pair[1] - pair[0];
            let step = h / n as f64;
            let mut nodes = Vec::with_capacity(n + 1);
            for j in 0..=n {
                let time = if j == n { pair[1] } else { pair[0] + step * j as f64 };
                let simpson = if j == 0 || j == n {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let weight = simpson * h / (3.0 * n as f64);
                let human = match &self.human {
                    Some(hp) => {
                        let (joints, confidences) = hp.predicted.sample(time);
                        let body = build_capsule_body(&joints, &confidences, &hp.bone_pairs, hp.r0, hp.r1)?;
                        Some(NodeHuman {
                            frame: SkeletonFrame::fully_tracked(time, joints),
                            body,
                        })
                    }
                    None => None,
                };
                nodes.push(Node {
                    time,
                    weight,
                    seed: seeding::mix2(self.seed, seg as u64, j as u64),
                    human,
                });
            }
            segments.push(nodes);
        }
        let blocker_links: Vec<usize> = self
            .robot
            .link_shapes()
            .iter()
            .enumerate()
            .filter(|(_, (link, _))| *link != self.robot.camera_mount.link)
            .map(|(i, _)| i)
            .collect();
        let obstacle_bounds = self.obstacles.iter().map(bounding_sphere).collect();
        Ok(CostContext {
            scene: self,
            knot_times: knot_times.to_vec(),
            segments,
            blocker_links,
            obstacle_bounds,
        })
    }
}

/// Per-term costs and the weighted objective for one candidate trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostReport {
    pub smoothness: f64,
    pub static_collision: f64,
    pub human_collision: f64,
    pub occlusion: f64,
    pub total: f64,
    /// Quadrature nodes evaluated.
    pub samples: usize,
}

struct NodeHuman {
    frame: SkeletonFrame,
    body: HumanCapsuleBody,
}

struct Node {
    time: f64,
    weight: f64,
    seed: u64,
    human: Option<NodeHuman>,
}

/// Raw (unaveraged) per-term integrals: smoothness, static collision,
/// human collision, occlusion, in that order.
pub type RawTerms = [f64; 4];

/// Precomputed evaluation grid bound to one set of knot times. Reusable
/// across every candidate trajectory sharing those times, which is what
/// makes common-random-number cost comparisons meaningful.
pub struct CostContext<'a> {
    scene: &'a Scene,
    knot_times: Vec<f64>,
    segments: Vec<Vec<Node>>,
    blocker_links: Vec<usize>,
    obstacle_bounds: Vec<(Point3, f64)>,
}

impl CostContext<'_> {
    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn duration(&self) -> f64 {
        self.knot_times[self.knot_times.len() - 1] - self.knot_times[0]
    }

    pub fn knot_times(&self) -> &[f64] {
        &self.knot_times
    }

    fn check_times(&self, traj: &Trajectory) -> Result<(), CostError> {
        if traj.waypoints().len() != self.knot_times.len() {
            return Err(CostError::TimesMismatch);
        }
        for (w, &t) in traj.waypoints().iter().zip(&self.knot_times) {
            if (w.time - t).abs() > 1e-9 {
                return Err(CostError::TimesMismatch);
            }
        }
        Ok(())
    }

    /// Raw per-term integrals over one segment. Depends only on the two
    /// waypoints bounding that segment, so a waypoint edit invalidates at
    /// most two segments' worth of work.
    pub fn segment_raw(&self, traj: &Trajectory, seg: usize, weights: &CostWeights) -> Result<RawTerms, CostError> {
        self.segment_raw_active(traj, seg, weights, [true; 4])
    }

    /// Like [`segment_raw`](Self::segment_raw) with inactive terms pinned to
    /// exactly 0.0 and their work skipped.
    fn segment_raw_active(
        &self,
        traj: &Trajectory,
        seg: usize,
        weights: &CostWeights,
        active: [bool; 4],
    ) -> Result<RawTerms, CostError> {
        let mut acc = [0.0; 4];
        for node in &self.segments[seg] {
            let terms = self.node_terms(traj, node, weights, active)?;
            for (a, t) in acc.iter_mut().zip(terms) {
                *a += node.weight * t;
            }
        }
        Ok(acc)
    }

    /// Weighted raw integral over one segment, skipping zero-weighted terms.
    /// Meant for local gradient probes; deltas of this quantity divided by
    /// the duration are objective deltas.
    pub fn segment_objective(&self, traj: &Trajectory, seg: usize, weights: &CostWeights) -> Result<f64, CostError> {
        let raw = self.segment_raw_active(traj, seg, weights, active_terms(weights))?;
        Ok(weights.smoothness * raw[0]
            + weights.static_collision * raw[1]
            + weights.human_collision * raw[2]
            + weights.occlusion * raw[3])
    }

    /// Raw occlusion integral over one segment alone. Visibility moves in
    /// steps as rays flip between clear and blocked, so probes of this
    /// quantity need far coarser offsets than the smooth terms tolerate.
    pub fn segment_occlusion_raw(&self, traj: &Trajectory, seg: usize, weights: &CostWeights) -> Result<f64, CostError> {
        Ok(self.segment_raw_active(traj, seg, weights, [false, false, false, true])?[3])
    }

    /// All four integrand values at one grid node; inactive entries are 0.0.
    fn node_terms(
        &self,
        traj: &Trajectory,
        node: &Node,
        weights: &CostWeights,
        active: [bool; 4],
    ) -> Result<RawTerms, CostError> {
        let (q, qdot, _) = traj.sample(node.time)?;
        let mut smooth = 0.0;
        if active[0] {
            for d in 0..q.len() {
                smooth += weights.joint_weights[d] * qdot[d] * qdot[d];
            }
        }
        if !(active[1] || active[2] || active[3]) {
            return Ok([smooth, 0.0, 0.0, 0.0]);
        }
        let world = self.scene.robot.link_geometry_world(q.as_slice())?;
        let stat = if active[1] { self.static_integrand(&world) } else { 0.0 };
        let human = if active[2] { human_integrand(&world, &node.human) } else { 0.0 };
        let occ = if active[3] { self.occlusion_integrand(&q, &world, node)? } else { 0.0 };
        Ok([smooth, stat, human, occ])
    }

    fn static_integrand(&self, world: &[Shape]) -> f64 {
        let margin = self.scene.obstacle_margin;
        let mut sum = 0.0;
        for shape in world {
            let sb = bounding_sphere(shape);
            for (obstacle, ob) in self.scene.obstacles.iter().zip(&self.obstacle_bounds) {
                let reach = sb.1 + ob.1 + margin;
                if (sb.0 - ob.0).norm_squared() > reach * reach {
                    continue;
                }
                let pen = margin_penetration(shape, obstacle, margin);
                sum += pen * pen;
            }
        }
        sum
    }

    fn occlusion_integrand(&self, q: &DVector<f64>, world: &[Shape], node: &Node) -> Result<f64, CostError> {
        let Some(human) = &node.human else { return Ok(0.0) };
        let camera = CameraModel::new(self.scene.robot.camera_pose(q.as_slice())?, self.scene.intrinsics);
        let blockers: Vec<Shape> = self.blocker_links.iter().map(|&i| world[i].clone()).collect();
        let report = occlusion_report(&camera, &human.frame, &blockers, &self.scene.vis, node.seed);
        let miss = 1.0 - report.frame_confidence;
        Ok(miss * miss)
    }

    /// Evaluates all four terms over the shared grid.
    pub fn evaluate(&self, traj: &Trajectory, weights: &CostWeights) -> Result<CostReport, CostError> {
        self.evaluate_active(traj, weights, [true; 4])
    }

    fn evaluate_active(
        &self,
        traj: &Trajectory,
        weights: &CostWeights,
        active: [bool; 4],
    ) -> Result<CostReport, CostError> {
        self.check_times(traj)?;
        weights.validate(traj.dof())?;
        let mut raw = [0.0; 4];
        for seg in 0..self.segments.len() {
            let part = self.segment_raw_active(traj, seg, weights, active)?;
            for (a, p) in raw.iter_mut().zip(part) {
                *a += p;
            }
        }
        let t_total = self.duration();
        let smoothness = raw[0] / t_total;
        let static_collision = raw[1] / t_total;
        let human_collision = raw[2] / t_total;
        let occlusion = raw[3] / t_total;
        let total = weights.smoothness * smoothness
            + weights.static_collision * static_collision
            + weights.human_collision * human_collision
            + weights.occlusion * occlusion;
        let samples = self.segments.iter().map(Vec::len).sum();
        Ok(CostReport { smoothness, static_collision, human_collision, occlusion, total, samples })
    }

    /// The weighted objective alone, with zero-weighted terms skipped. A
    /// skipped term's contribution is exactly 0.0 and the accumulation order
    /// matches [`evaluate`](Self::evaluate), so the result is bitwise equal
    /// to `evaluate(..).total`.
    pub fn objective(&self, traj: &Trajectory, weights: &CostWeights) -> Result<f64, CostError> {
        Ok(self.evaluate_active(traj, weights, active_terms(weights))?.total)
    }
}

fn active_terms(weights: &CostWeights) -> [bool; 4] {
    [
        weights.smoothness > 0.0,
        weights.static_collision > 0.0,
        weights.human_collision > 0.0,
        weights.occlusion > 0.0,
    ]
}

fn human_integrand(world: &[Shape], human: &Option<NodeHuman>) -> f64 {
    let Some(human) = human else { return 0.0 };
    let mut sum = 0.0;
    for shape in world {
        let sb = bounding_sphere(shape);
        for bc in &human.body.capsules {
            let mid = nalgebra::center(&bc.capsule.a, &bc.capsule.b);
            let reach = sb.1 + 0.5 * (bc.capsule.b - bc.capsule.a).norm() + bc.capsule.radius;
            if (sb.0 - mid).norm_squared() > reach * reach {
                continue;
            }
            let pen = crate::geom::shape_capsule_penetration(shape, &bc.capsule);
            sum += pen * pen;
        }
    }
    sum
}

fn bounding_sphere(shape: &Shape) -> (Point3, f64) {
    match shape {
        Shape::Capsule(c) => (nalgebra::center(&c.a, &c.b), 0.5 * (c.b - c.a).norm() + c.radius),
        Shape::Box(b) => (b.center, b.half_extents.norm()),
    }
}

/// Penetration with one side inflated by `margin`. Growing a capsule radius
/// is an exact Minkowski inflation, so the margin goes onto whichever side
/// is a capsule; box-box pairs never reach here (scene validation).
fn margin_penetration(robot_shape: &Shape, obstacle: &Shape, margin: f64) -> f64 {
    if margin == 0.0 {
        return crate::geom::shape_penetration(robot_shape, obstacle);
    }
    match obstacle {
        Shape::Capsule(c) => {
            let mut fat = c.clone();
            fat.radius += margin;
            crate::geom::shape_capsule_penetration(robot_shape, &fat)
        }
        Shape::Box(_) => match robot_shape {
            Shape::Capsule(c) => {
                let mut fat = c.clone();
                fat.radius += margin;
                crate::geom::shape_capsule_penetration(obstacle, &fat)
            }
            Shape::Box(_) => crate::geom::shape_penetration(robot_shape, obstacle),
        },
    }
}

/// Time-averaged `q'(t)^T D q'(t)`.
pub fn smoothness_cost(traj: &Trajectory, scene: &Scene, weights: &CostWeights) -> Result<f64, CostError> {
    Ok(scene.context(&knots(traj))?.evaluate(traj, weights)?.smoothness)
}

/// Time-averaged squared penetration against static obstacles.
pub fn static_collision_cost(traj: &Trajectory, scene: &Scene) -> Result<f64, CostError> {
    let weights = CostWeights::standard(traj.dof());
    Ok(scene.context(&knots(traj))?.evaluate(traj, &weights)?.static_collision)
}

/// Time-averaged squared penetration against the predicted human.
pub fn human_collision_cost(traj: &Trajectory, scene: &Scene) -> Result<f64, CostError> {
    let weights = CostWeights::standard(traj.dof());
    Ok(scene.context(&knots(traj))?.evaluate(traj, &weights)?.human_collision)
}

/// Time-averaged `(1 - alpha(t))^2` where alpha is the camera's view
/// confidence of the predicted human past the robot's own body.
pub fn occlusion_cost(traj: &Trajectory, scene: &Scene) -> Result<f64, CostError> {
    let weights = CostWeights::standard(traj.dof());
    Ok(scene.context(&knots(traj))?.evaluate(traj, &weights)?.occlusion)
}

/// Full per-term breakdown plus the weighted total.
pub fn total_cost(traj: &Trajectory, scene: &Scene, weights: &CostWeights) -> Result<CostReport, CostError> {
    scene.context(&knots(traj))?.evaluate(traj, weights)
}

pub fn knots(traj: &Trajectory) -> Vec<f64> {
    traj.waypoints().iter().map(|w| w.time).collect()
}
