//! Trajectory optimization and replanning support.
//!
//! The optimizer is a projected descent on the waypoint parameters: interior
//! waypoint positions and velocities move along a finite-difference gradient
//! of the weighted objective, a backtracking line search keeps every accepted
//! step a strict improvement, and each candidate is projected onto the joint
//! and velocity boxes and rejected outright if any sampled point between
//! knots escapes them. When progress stalls, a burst of seeded random
//! waypoint perturbations tries to hop out of the local basin; the incumbent
//! is kept unless a perturbation is strictly better.
//!
//! Endpoints are never touched: the first and last waypoints of the returned
//! trajectory are bit-identical to the initial one's.
//!
//! Finite differences over the occlusion term only work because cost
//! evaluation uses common random numbers: the ray noise cancels in the
//! difference, leaving the geometric signal.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cost::{CostContext, CostError, CostReport, CostWeights, Scene};
use crate::robot::{RobotConfig, RobotError, RobotModel};
use crate::seeding;
use crate::traj::{check_limits, TrajError, Trajectory, Waypoint};

const PLAN_SALT: u64 = 0x706c_616e;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("endpoint configuration violates joint or velocity limits ({0})")]
    InfeasibleEndpoints(String),
    #[error("initial trajectory violates limits at {0} sampled points even after knot projection")]
    InfeasibleInitial(usize),
    #[error("planner parameter {0} must be positive")]
    BadParam(&'static str),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error(transparent)]
    Robot(#[from] RobotError),
}

#[derive(Clone, Copy, Debug)]
pub struct PlannerParams {
    pub max_iterations: usize,
    /// Largest per-knot move of one accepted step, radians; the line search
    /// halves downward from here.
    pub step_size: f64,
    pub fd_epsilon: f64,
    /// Offset for probing the occlusion term, radians. Visibility counts
    /// change in steps, so differences taken this far apart read the slope
    /// of the staircase envelope instead of a flat tread.
    pub occlusion_fd_epsilon: f64,
    /// Random candidates per escape burst. Successive candidates shrink
    /// from the base magnitude so a burst probes coarse hops and fine
    /// slides in the same sweep.
    pub perturbation_count: usize,
    /// Standard deviation of the largest escape noise, radians.
    pub perturbation_magnitude: f64,
    /// Consecutive sub-tolerance iterations before an escape burst fires.
    pub stall_iterations: usize,
    /// Cost decrease below which an iteration counts as stalled.
    pub tolerance: f64,
    /// Replanning cadence, seconds.
    pub replan_period: f64,
    /// Samples per segment for hard-constraint checks on candidates.
    pub limit_check_samples: usize,
    pub max_backtracks: usize,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            max_iterations: 60,
            step_size: 0.2,
            fd_epsilon: 1e-4,
            occlusion_fd_epsilon: 0.02,
            perturbation_count: 12,
            perturbation_magnitude: 0.05,
            stall_iterations: 8,
            tolerance: 1e-6,
            replan_period: 0.5,
            limit_check_samples: 8,
            max_backtracks: 10,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.step_size <= 0.0 {
            return Err(PlanError::BadParam("step_size"));
        }
        if self.fd_epsilon <= 0.0 {
            return Err(PlanError::BadParam("fd_epsilon"));
        }
        if self.occlusion_fd_epsilon <= 0.0 {
            return Err(PlanError::BadParam("occlusion_fd_epsilon"));
        }
        if self.perturbation_magnitude <= 0.0 {
            return Err(PlanError::BadParam("perturbation_magnitude"));
        }
        if self.tolerance <= 0.0 {
            return Err(PlanError::BadParam("tolerance"));
        }
        if self.replan_period <= 0.0 {
            return Err(PlanError::BadParam("replan_period"));
        }
        if self.stall_iterations == 0 {
            return Err(PlanError::BadParam("stall_iterations"));
        }
        if self.limit_check_samples == 0 {
            return Err(PlanError::BadParam("limit_check_samples"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PlanResult {
    pub trajectory: Trajectory,
    pub report: CostReport,
    pub iterations: usize,
    pub converged: bool,
    /// Accepted objective values, starting with the initial trajectory's.
    pub cost_trace: Vec<f64>,
}

/// One optimization variable: an interior waypoint's position or velocity
/// entry.
#[derive(Clone, Copy)]
struct Var {
    waypoint: usize,
    dof: usize,
    velocity: bool,
}

fn variables(waypoint_count: usize, dof: usize) -> Vec<Var> {
    let mut vars = Vec::with_capacity(2 * dof * waypoint_count.saturating_sub(2));
    for waypoint in 1..waypoint_count - 1 {
        for d in 0..dof {
            vars.push(Var { waypoint, dof: d, velocity: false });
            vars.push(Var { waypoint, dof: d, velocity: true });
        }
    }
    vars
}

fn bump(waypoints: &[Waypoint], var: Var, delta: f64) -> Result<Trajectory, TrajError> {
    let mut pts = waypoints.to_vec();
    if var.velocity {
        pts[var.waypoint].qdot[var.dof] += delta;
    } else {
        pts[var.waypoint].q[var.dof] += delta;
    }
    Trajectory::new(pts)
}

/// Central-difference gradient of the weighted objective with respect to the
/// interior waypoint variables. Each variable only influences the two
/// segments meeting at its waypoint, so only those segments are integrated.
/// The common-random-number seeding makes the occlusion term identical on
/// both sides of the difference except for the geometric change.
pub fn objective_gradient(
    ctx: &CostContext<'_>,
    traj: &Trajectory,
    weights: &CostWeights,
    fd_epsilon: f64,
) -> Result<Vec<f64>, PlanError> {
    let waypoints = traj.waypoints();
    let vars = variables(waypoints.len(), traj.dof());
    let duration = ctx.duration();
    let mut grad = Vec::with_capacity(vars.len());
    for var in vars {
        let segs = [var.waypoint - 1, var.waypoint];
        let plus = bump(waypoints, var, fd_epsilon)?;
        let minus = bump(waypoints, var, -fd_epsilon)?;
        let mut diff = 0.0;
        for seg in segs {
            diff += ctx.segment_objective(&plus, seg, weights)?;
            diff -= ctx.segment_objective(&minus, seg, weights)?;
        }
        grad.push(diff / (2.0 * fd_epsilon * duration));
    }
    Ok(grad)
}

/// Coarse central-difference slope of the weighted occlusion term alone.
/// The occlusion integrand is a staircase in configuration: a tiny offset
/// almost never flips a ray, so [`objective_gradient`] reads its slope as
/// zero. Probing at a coarse offset flips many rays and recovers the slope
/// of the envelope, which is the direction that actually clears the view.
/// Identical node seeds on both sides keep the difference purely geometric.
fn occlusion_direction(
    ctx: &CostContext<'_>,
    traj: &Trajectory,
    weights: &CostWeights,
    epsilon: f64,
) -> Result<Vec<f64>, PlanError> {
    let waypoints = traj.waypoints();
    let vars = variables(waypoints.len(), traj.dof());
    if weights.occlusion == 0.0 {
        return Ok(vec![0.0; vars.len()]);
    }
    let duration = ctx.duration();
    let mut grad = Vec::with_capacity(vars.len());
    for var in vars {
        let segs = [var.waypoint - 1, var.waypoint];
        let plus = bump(waypoints, var, epsilon)?;
        let minus = bump(waypoints, var, -epsilon)?;
        let mut diff = 0.0;
        for seg in segs {
            diff += ctx.segment_occlusion_raw(&plus, seg, weights)?;
            diff -= ctx.segment_occlusion_raw(&minus, seg, weights)?;
        }
        grad.push(weights.occlusion * diff / (2.0 * epsilon * duration));
    }
    Ok(grad)
}

fn project_interior(waypoints: &mut [Waypoint], model: &RobotModel) {
    let count = waypoints.len();
    for w in &mut waypoints[1..count - 1] {
        for d in 0..w.q.len() {
            let lim = model.joint_limits(d);
            w.q[d] = w.q[d].clamp(lim[0], lim[1]);
            let vlim = model.velocity_limits(d);
            w.qdot[d] = w.qdot[d].clamp(vlim[0], vlim[1]);
        }
    }
}

fn endpoint_feasible(traj: &Trajectory, model: &RobotModel) -> Result<(), PlanError> {
    for (name, w) in [("start", &traj.waypoints()[0]), ("goal", traj.waypoints().last().unwrap())] {
        for d in 0..w.q.len() {
            let lim = model.joint_limits(d);
            if w.q[d] < lim[0] || w.q[d] > lim[1] {
                return Err(PlanError::InfeasibleEndpoints(format!(
                    "{name} dof {d} position {} outside [{}, {}]",
                    w.q[d], lim[0], lim[1]
                )));
            }
            let vlim = model.velocity_limits(d);
            if w.qdot[d] < vlim[0] || w.qdot[d] > vlim[1] {
                return Err(PlanError::InfeasibleEndpoints(format!(
                    "{name} dof {d} velocity {} outside [{}, {}]",
                    w.qdot[d], vlim[0], vlim[1]
                )));
            }
        }
    }
    Ok(())
}

/// Minimizes the weighted objective over the interior waypoints of
/// `initial`, holding knot times and both endpoints fixed. The returned
/// trajectory never costs more than the initial one and always passes the
/// sampled limit check.
pub fn optimize(
    initial: &Trajectory,
    scene: &Scene,
    weights: &CostWeights,
    params: &PlannerParams,
) -> Result<PlanResult, PlanError> {
    params.validate()?;
    weights.validate(initial.dof())?;
    endpoint_feasible(initial, &scene.robot)?;

    let mut start_points = initial.waypoints().to_vec();
    project_interior(&mut start_points, &scene.robot);
    let current = Trajectory::new(start_points)?;
    let initial_violations = check_limits(&current, &scene.robot, params.limit_check_samples);
    if !initial_violations.is_empty() {
        return Err(PlanError::InfeasibleInitial(initial_violations.len()));
    }

    let knot_times: Vec<f64> = current.waypoints().iter().map(|w| w.time).collect();
    let ctx = scene.context(&knot_times)?;
    let mut current = current;
    let mut current_obj = ctx.objective(&current, weights)?;
    let mut cost_trace = vec![current_obj];
    let mut rng = ChaCha8Rng::seed_from_u64(seeding::mix(scene.seed, PLAN_SALT));
    let mut stall = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;
    // The line search remembers its working scale across iterations so it
    // can settle far below the initial step without re-paying the whole
    // backtracking ladder every time.
    let mut step = params.step_size;
    let min_step = params.step_size * 2.0f64.powi(-48);

    let probe_occlusion = weights.occlusion > 0.0 && scene.human.is_some();
    // With the coarse occlusion probe in play, the fine differences skip the
    // occlusion term: at that offset its slope reads as zero almost
    // everywhere, and the rare ray flip inside the window would inject a
    // step discontinuity amplified by the tiny divisor.
    let mut fine_weights = weights.clone();
    if probe_occlusion {
        fine_weights.occlusion = 0.0;
    }
    for _ in 0..params.max_iterations {
        iterations += 1;
        let mut grad = objective_gradient(&ctx, &current, &fine_weights, params.fd_epsilon)?;
        if probe_occlusion {
            let occ =
                occlusion_direction(&ctx, &current, weights, params.occlusion_fd_epsilon)?;
            for (g, o) in grad.iter_mut().zip(occ) {
                *g += o;
            }
        }
        let ginf = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let mut improved = false;

        if ginf > 0.0 {
            let vars = variables(current.waypoints().len(), current.dof());
            // The ladder starts two doublings above the remembered step so
            // the step can grow back after over-shrinking; on staircase
            // terms, moves below one tread width change nothing and would
            // otherwise ratchet the memory down for good.
            for k in -2..=params.max_backtracks as i32 {
                let scale = (step * 0.5f64.powi(k)).min(params.step_size).max(min_step) / ginf;
                let mut pts = current.waypoints().to_vec();
                for (var, g) in vars.iter().zip(&grad) {
                    if var.velocity {
                        pts[var.waypoint].qdot[var.dof] -= scale * g;
                    } else {
                        pts[var.waypoint].q[var.dof] -= scale * g;
                    }
                }
                project_interior(&mut pts, &scene.robot);
                let candidate = Trajectory::new(pts)?;
                if !check_limits(&candidate, &scene.robot, params.limit_check_samples).is_empty() {
                    continue;
                }
                let cand_obj = ctx.objective(&candidate, weights)?;
                if cand_obj < current_obj {
                    let decrease = current_obj - cand_obj;
                    current = candidate;
                    current_obj = cand_obj;
                    cost_trace.push(current_obj);
                    improved = true;
                    step = (scale * ginf * 2.0).min(params.step_size).max(min_step);
                    if decrease < params.tolerance {
                        stall += 1;
                    } else {
                        stall = 0;
                    }
                    break;
                }
            }
            if !improved {
                // A gentle decay; collapsing the whole backtracking ladder
                // here would force the next accepted step to be so small its
                // decrease reads as a stall.
                step = (step * 0.25).max(min_step);
            }
        }

        if !improved {
            stall += 1;
        }

        if stall >= params.stall_iterations {
            let mut best: Option<(Trajectory, f64)> = None;
            for attempt in 0..params.perturbation_count {
                // Kinks in the clearance terms leave narrow descent cones
                // that coarse hops overshoot, so the burst sweeps downward
                // through magnitudes instead of using one scale.
                let magnitude =
                    params.perturbation_magnitude * 0.5f64.powi((attempt % 6) as i32);
                let mut pts = current.waypoints().to_vec();
                let count = pts.len();
                for w in &mut pts[1..count - 1] {
                    for d in 0..w.q.len() {
                        w.q[d] += magnitude * standard_normal(&mut rng);
                        w.qdot[d] += magnitude * standard_normal(&mut rng);
                    }
                }
                project_interior(&mut pts, &scene.robot);
                let candidate = Trajectory::new(pts)?;
                if !check_limits(&candidate, &scene.robot, params.limit_check_samples).is_empty() {
                    continue;
                }
                let cand_obj = ctx.objective(&candidate, weights)?;
                let beats_best = best.as_ref().map_or(true, |(_, b)| cand_obj < *b);
                if cand_obj < current_obj && beats_best {
                    best = Some((candidate, cand_obj));
                }
            }
            match best {
                Some((traj, obj)) => {
                    current = traj;
                    current_obj = obj;
                    cost_trace.push(current_obj);
                    stall = 0;
                }
                None => {
                    converged = true;
                    break;
                }
            }
        }
    }

    let report = ctx.evaluate(&current, weights)?;
    Ok(PlanResult { trajectory: current, report, iterations, converged, cost_trace })
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on two uniform draws; tails beyond what escape bursts need.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}

/// Seeds the next replanning cycle from the previous solution: knots inside
/// the previous plan's span resample it (so execution continues seamlessly),
/// and the uncovered tail runs straight to the goal, arriving at rest.
pub fn warm_start(
    prev: &Trajectory,
    start_time: f64,
    duration: f64,
    segments: usize,
    goal: &RobotConfig,
) -> Result<Trajectory, TrajError> {
    if segments == 0 {
        return Err(TrajError::TooFewWaypoints(1));
    }
    let h = duration / segments as f64;
    let times: Vec<f64> = (0..=segments)
        .map(|j| if j == segments { start_time + duration } else { start_time + h * j as f64 })
        .collect();
    let covered = times.iter().filter(|&&t| t <= prev.end_time()).count();
    let mut waypoints = Vec::with_capacity(segments + 1);
    for &t in &times[..covered] {
        let (q, qdot, _) = prev.sample(t)?;
        waypoints.push(Waypoint::new(q, qdot, t));
    }
    if covered == 0 {
        return Err(TrajError::TimeOutOfRange {
            t: start_time,
            start: prev.start_time(),
            end: prev.end_time(),
        });
    }
    if covered <= segments {
        let junction = waypoints[covered - 1].clone();
        let remaining = times[segments] - junction.time;
        let uniform = (goal - &junction.q) / remaining;
        for (j, &t) in times.iter().enumerate().skip(covered) {
            let s = (t - junction.time) / remaining;
            let q = &junction.q + (goal - &junction.q) * s;
            let qdot = if j == segments { RobotConfig::zeros(goal.len()) } else { uniform.clone() };
            waypoints.push(Waypoint::new(q, qdot, t));
        }
        let last = waypoints.last_mut().unwrap();
        last.q = goal.clone();
    }
    Trajectory::new(waypoints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{
        knots, occlusion_cost, static_collision_cost, CostWeights, HumanPrediction, Quadrature,
        Scene,
    };
    use crate::geom::{Capsule, OrientedBox, Point3, Shape, Vector3};
    use crate::human::{default_bone_pairs, JOINT_COUNT};
    use crate::occlusion::{CameraIntrinsics, VisParams};
    use crate::predict::PredictedHuman;
    use crate::robot::{CameraMount, JointSpec, RobotModel};
    use crate::synth::standing_posture;
    use crate::traj::straight_line_init;
    use nalgebra::{DVector, Isometry3, Translation3, UnitQuaternion};

    fn dv(vals: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(vals)
    }

    fn planar_robot() -> RobotModel {
        let joint = JointSpec::new(
            Vector3::z(),
            Isometry3::from_parts(Translation3::new(0.4, 0.0, 0.0), UnitQuaternion::identity()),
            [-2.6, 2.6],
            [-3.0, 3.0],
        )
        .unwrap();
        let link = |a: Point3, b: Point3| Shape::Capsule(Capsule { a, b, radius: 0.05 });
        let cam_rot = UnitQuaternion::rotation_between(&Vector3::z(), &Vector3::x()).unwrap();
        RobotModel::new(
            vec![joint.clone(), joint],
            vec![
                (1, link(Point3::new(-0.4, 0.0, 0.0), Point3::origin())),
                (2, link(Point3::new(-0.4, 0.0, 0.0), Point3::origin())),
            ],
            Isometry3::identity(),
            CameraMount {
                link: 2,
                local: Isometry3::from_parts(Translation3::new(0.0, 0.0, 0.1), cam_rot),
            },
        )
        .unwrap()
    }

    fn empty_scene() -> Scene {
        Scene {
            robot: planar_robot(),
            obstacles: Vec::new(),
            intrinsics: CameraIntrinsics::new(2.0, 2.0, 0.05, 20.0).unwrap(),
            human: None,
            vis: VisParams { rays: 8, ..VisParams::default() },
            seed: 11,
            quadrature: Quadrature::default(),
            obstacle_margin: 0.0,
        }
    }

    fn smoothness_weights() -> CostWeights {
        CostWeights {
            smoothness: 1.0,
            static_collision: 0.0,
            human_collision: 0.0,
            occlusion: 0.0,
            joint_weights: dv(&[1.0, 1.0]),
        }
    }

    #[test]
    fn smoothness_only_never_worsens_the_straight_line() {
        let scene = empty_scene();
        let weights = smoothness_weights();
        let initial = straight_line_init(&dv(&[-0.5, 0.3]), &dv(&[0.8, -0.6]), 3.0, 6, 0.0).unwrap();
        let params = PlannerParams::default();
        let result = optimize(&initial, &scene, &weights, &params).unwrap();

        let initial_total = crate::cost::total_cost(&initial, &scene, &weights).unwrap().total;
        assert!(result.report.total <= initial_total + 1e-12);
        for pair in result.cost_trace.windows(2) {
            assert!(pair[1] <= pair[0], "trace must be non-increasing");
        }
        // Endpoints are untouched, bit for bit.
        assert_eq!(result.trajectory.waypoints()[0], initial.waypoints()[0]);
        assert_eq!(result.trajectory.waypoints()[6], initial.waypoints()[6]);
        assert!(check_limits(&result.trajectory, &scene.robot, 16).is_empty());
    }

    #[test]
    fn bent_initial_straightens_out() {
        let scene = empty_scene();
        let weights = smoothness_weights();
        let straight = straight_line_init(&dv(&[-0.5, 0.3]), &dv(&[0.8, -0.6]), 3.0, 6, 0.0).unwrap();
        let mut bent_points = straight.waypoints().to_vec();
        bent_points[2].q[0] += 0.4;
        bent_points[3].q[1] -= 0.5;
        bent_points[4].qdot[0] += 0.8;
        let bent = Trajectory::new(bent_points).unwrap();

        let result = optimize(&bent, &scene, &weights, &PlannerParams::default()).unwrap();
        let bent_total = crate::cost::total_cost(&bent, &scene, &weights).unwrap().total;
        assert!(
            result.report.total < 0.5 * bent_total,
            "optimizer should remove most of the detour: {} vs {}",
            result.report.total,
            bent_total
        );
    }

    #[test]
    fn box_in_the_corridor_gets_avoided() {
        let mut scene = empty_scene();
        // A thin post grazing the tip arc of the elbow-bent swing. The bent
        // posture keeps the tip off the edge of the reachable workspace, so
        // a small elbow adjustment dodges the post in either direction.
        scene.obstacles.push(Shape::Box(OrientedBox {
            center: Point3::new(0.7713, 0.1166, 0.0),
            half_extents: Vector3::new(0.03, 0.03, 0.25),
            orientation: UnitQuaternion::identity(),
        }));
        // The penalty equilibrium always sits in slight contact with the
        // costed surface, so the planning scene carries a standoff margin
        // and safety is judged against the raw shapes afterwards.
        scene.obstacle_margin = 0.08;
        // Penetration is measured in meters and smoothness in rad^2/s^2, so
        // the collision weight has to be large for a detour to beat passing
        // straight through the post.
        let weights = CostWeights {
            smoothness: 1.0,
            static_collision: 2000.0,
            human_collision: 0.0,
            occlusion: 0.0,
            joint_weights: dv(&[1.0, 1.0]),
        };
        let initial =
            straight_line_init(&dv(&[0.0, -0.9]), &dv(&[1.2, -0.9]), 3.0, 6, 0.0).unwrap();
        let initial_report = crate::cost::total_cost(&initial, &scene, &weights).unwrap();
        assert!(initial_report.static_collision > 1e-4, "the straight swing must clip the post");

        let mut params = PlannerParams::default();
        params.max_iterations = 200;
        let result = optimize(&initial, &scene, &weights, &params).unwrap();
        assert!(result.report.total < initial_report.total);

        // Post-hoc safety: dense evaluation against the uninflated shapes.
        let mut real = scene.clone();
        real.obstacle_margin = 0.0;
        real.quadrature = Quadrature::new(32).unwrap();
        let post = static_collision_cost(&result.trajectory, &real).unwrap();
        assert!(post < 1e-6, "true penetration cost {post}");
        assert!(check_limits(&result.trajectory, &scene.robot, 16).is_empty());
    }

    /// Two-link arm whose forearm carries a blade at torso height, watched
    /// by a camera fixed to the base looking across the workspace. The
    /// upper arm stays low, so only the forearm can cross the sight lines.
    fn watcher_robot() -> RobotModel {
        let joint = JointSpec::new(
            Vector3::z(),
            Isometry3::from_parts(Translation3::new(0.4, 0.0, 0.0), UnitQuaternion::identity()),
            [-2.6, 2.6],
            [-3.0, 3.0],
        )
        .unwrap();
        let link = |a: Point3, b: Point3| Shape::Capsule(Capsule { a, b, radius: 0.05 });
        let cam_rot = UnitQuaternion::rotation_between(&Vector3::z(), &Vector3::y()).unwrap();
        RobotModel::new(
            vec![joint.clone(), joint],
            vec![
                (1, link(Point3::new(-0.4, 0.0, 0.2), Point3::new(0.0, 0.0, 0.2))),
                (2, link(Point3::new(-0.4, 0.0, 0.97), Point3::new(0.0, 0.0, 0.97))),
            ],
            Isometry3::identity(),
            CameraMount {
                link: 0,
                local: Isometry3::from_parts(Translation3::new(0.0, -0.8, 1.1), cam_rot),
            },
        )
        .unwrap()
    }

    fn standing_prediction(feet_xy: (f64, f64), span: (f64, f64)) -> HumanPrediction {
        let posture = standing_posture();
        let mut joints = [Point3::origin(); JOINT_COUNT];
        for (j, off) in posture.iter().enumerate() {
            joints[j] = Point3::new(feet_xy.0 + off.x, feet_xy.1 + off.y, off.z);
        }
        let confs = [1.0; JOINT_COUNT];
        HumanPrediction {
            predicted: PredictedHuman {
                anchor_time: span.0,
                anchor_joints: joints,
                anchor_confidences: confs,
                times: vec![span.1],
                joints: vec![joints],
                confidences: vec![confs],
            },
            bone_pairs: default_bone_pairs(),
            r0: 0.20,
            r1: 0.05,
        }
    }

    #[test]
    fn costed_visibility_hurries_the_arm_across_the_sight_line() {
        let scene = Scene {
            robot: watcher_robot(),
            obstacles: Vec::new(),
            intrinsics: CameraIntrinsics::new(2.0, 2.0, 0.05, 20.0).unwrap(),
            human: Some(standing_prediction((0.0, 1.2), (0.0, 4.0))),
            vis: VisParams { rays: 16, ..VisParams::default() },
            seed: 29,
            quadrature: Quadrature::default(),
            obstacle_margin: 0.0,
        };
        // The swing has to pass the camera-to-human corridor around the
        // arm angle of a right angle; what varies is how it does so.
        let initial =
            straight_line_init(&dv(&[0.2, 0.0]), &dv(&[2.5, 0.0]), 4.0, 8, 0.0).unwrap();
        let occ_initial = occlusion_cost(&initial, &scene).unwrap();
        assert!(occ_initial > 0.002, "the straight swing must block the view: {occ_initial}");

        let blind = CostWeights {
            smoothness: 1.0,
            static_collision: 0.0,
            human_collision: 0.0,
            occlusion: 0.0,
            joint_weights: dv(&[1.0, 1.0]),
        };
        let mut aware = blind.clone();
        aware.occlusion = 300.0;
        let mut params = PlannerParams::default();
        params.max_iterations = 200;

        let blind_plan = optimize(&initial, &scene, &blind, &params).unwrap();
        let aware_plan = optimize(&initial, &scene, &aware, &params).unwrap();

        let occ_blind = occlusion_cost(&blind_plan.trajectory, &scene).unwrap();
        let occ_aware = occlusion_cost(&aware_plan.trajectory, &scene).unwrap();
        assert!(
            occ_aware < 0.6 * occ_blind,
            "costed visibility should clear most of the blockage: {occ_aware} vs {occ_blind}"
        );
        assert!(check_limits(&aware_plan.trajectory, &scene.robot, 16).is_empty());
    }

    #[test]
    fn gradient_matches_full_objective_differences() {
        let mut scene = empty_scene();
        scene.obstacles.push(Shape::Capsule(Capsule {
            a: Point3::new(0.6, 0.2, -0.3),
            b: Point3::new(0.6, 0.2, 0.3),
            radius: 0.12,
        }));
        let weights = CostWeights {
            smoothness: 1.0,
            static_collision: 100.0,
            human_collision: 0.0,
            occlusion: 0.0,
            joint_weights: dv(&[1.0, 2.0]),
        };
        let traj = straight_line_init(&dv(&[-0.3, 0.1]), &dv(&[1.0, -0.4]), 2.0, 4, 0.0).unwrap();
        let ctx = scene.context(&knots(&traj)).unwrap();
        let eps = 1e-5;
        let grad = objective_gradient(&ctx, &traj, &weights, eps).unwrap();

        let vars = variables(traj.waypoints().len(), traj.dof());
        assert_eq!(grad.len(), vars.len());
        for (var, g) in vars.iter().zip(&grad) {
            let plus = bump(traj.waypoints(), *var, eps).unwrap();
            let minus = bump(traj.waypoints(), *var, -eps).unwrap();
            let full = (ctx.objective(&plus, &weights).unwrap() - ctx.objective(&minus, &weights).unwrap())
                / (2.0 * eps);
            let denom = full.abs().max(1e-9);
            assert!(
                (g - full).abs() / denom < 1e-9,
                "segment-local gradient disagrees with full difference: {g} vs {full}"
            );
        }
    }

    #[test]
    fn optimization_is_deterministic() {
        let mut scene = empty_scene();
        scene.obstacles.push(Shape::Capsule(Capsule {
            a: Point3::new(0.6, 0.2, -0.3),
            b: Point3::new(0.6, 0.2, 0.3),
            radius: 0.12,
        }));
        let weights = CostWeights {
            smoothness: 1.0,
            static_collision: 100.0,
            human_collision: 0.0,
            occlusion: 0.0,
            joint_weights: dv(&[1.0, 1.0]),
        };
        let initial = straight_line_init(&dv(&[0.0, 0.0]), &dv(&[1.2, 0.0]), 3.0, 5, 0.0).unwrap();
        let params = PlannerParams::default();
        let a = optimize(&initial, &scene, &weights, &params).unwrap();
        let b = optimize(&initial, &scene, &weights, &params).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.report, b.report);
        assert_eq!(a.cost_trace, b.cost_trace);
    }

    #[test]
    fn infeasible_endpoints_are_rejected() {
        let scene = empty_scene();
        let weights = smoothness_weights();
        let params = PlannerParams::default();
        let outside = straight_line_init(&dv(&[-5.0, 0.0]), &dv(&[0.5, 0.0]), 2.0, 4, 0.0).unwrap();
        assert!(matches!(
            optimize(&outside, &scene, &weights, &params),
            Err(PlanError::InfeasibleEndpoints(_))
        ));
    }

    #[test]
    fn zero_iteration_budget_returns_the_initial_plan() {
        let scene = empty_scene();
        let weights = smoothness_weights();
        let initial = straight_line_init(&dv(&[0.0, 0.0]), &dv(&[0.5, 0.5]), 2.0, 4, 0.0).unwrap();
        let mut params = PlannerParams::default();
        params.max_iterations = 0;
        let result = optimize(&initial, &scene, &weights, &params).unwrap();
        assert_eq!(result.trajectory, initial);
        assert_eq!(result.cost_trace.len(), 1);
        assert!(!result.converged);
        assert_eq!(result.iterations, 0);
    }

    #[test]
    fn warm_start_resamples_then_runs_to_goal() {
        let prev = straight_line_init(&dv(&[0.0, 0.0]), &dv(&[1.0, -0.5]), 3.0, 6, 0.0).unwrap();
        let goal = dv(&[1.0, -0.5]);
        let next = warm_start(&prev, 0.5, 3.0, 6, &goal).unwrap();

        assert_eq!(next.start_time(), 0.5);
        assert_eq!(next.end_time(), 3.5);
        assert_eq!(next.waypoints().len(), 7);
        // Knots still inside the previous span reproduce it exactly.
        for w in next.waypoints().iter().filter(|w| w.time <= 3.0) {
            let (q, qdot, _) = prev.sample(w.time).unwrap();
            assert_eq!(w.q, q);
            assert_eq!(w.qdot, qdot);
        }
        // The tail ends at the goal, at rest.
        let last = next.waypoints().last().unwrap();
        assert_eq!(last.q, goal);
        assert_eq!(last.qdot, dv(&[0.0, 0.0]));

        // A start past the previous end is an error.
        assert!(warm_start(&prev, 3.2, 3.0, 6, &goal).is_err());
    }
}
