//! Joint-space trajectories as cubic Hermite splines.
//!
//! A trajectory is a strictly time-ordered list of waypoints, each carrying
//! a configuration and a joint velocity. Between consecutive waypoints every
//! degree of freedom follows the cubic uniquely determined by the boundary
//! positions and velocities, so the spline is C1 and each segment depends
//! only on its two endpoint waypoints. The optimizer leans on that locality:
//! nudging one waypoint only perturbs the two segments touching it.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use thiserror::Error;

use crate::robot::{RobotConfig, RobotModel};

#[derive(Debug, Error, PartialEq)]
pub enum TrajError {
    #[error("trajectory needs at least two waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoint times must strictly increase ({prev} then {next})")]
    NonMonotonicTime { prev: f64, next: f64 },
    #[error("waypoint {index} has {got} dofs, expected {expected}")]
    DofMismatch { index: usize, expected: usize, got: usize },
    #[error("time {t} is outside the trajectory span [{start}, {end}]")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Waypoint {
    pub q: RobotConfig,
    pub qdot: RobotConfig,
    pub time: f64,
}

impl Waypoint {
    pub fn new(q: RobotConfig, qdot: RobotConfig, time: f64) -> Self {
        Waypoint { q, qdot, time }
    }
}

/// Piecewise-cubic joint trajectory, C1 across knots.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self, TrajError> {
        if waypoints.len() < 2 {
            return Err(TrajError::TooFewWaypoints(waypoints.len()));
        }
        let dof = waypoints[0].q.len();
        for (i, w) in waypoints.iter().enumerate() {
            if w.q.len() != dof || w.qdot.len() != dof {
                return Err(TrajError::DofMismatch {
                    index: i,
                    expected: dof,
                    got: if w.q.len() != dof { w.q.len() } else { w.qdot.len() },
                });
            }
        }
        for pair in waypoints.windows(2) {
            if pair[1].time <= pair[0].time {
                return Err(TrajError::NonMonotonicTime { prev: pair[0].time, next: pair[1].time });
            }
        }
        Ok(Trajectory { waypoints })
    }

    pub fn dof(&self) -> usize {
        self.waypoints[0].q.len()
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn start_time(&self) -> f64 {
        self.waypoints[0].time
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].time
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn segment_count(&self) -> usize {
        self.waypoints.len() - 1
    }

    /// Index of the segment containing `t`; the final knot belongs to the
    /// last segment.
    pub fn segment_index(&self, t: f64) -> Result<usize, TrajError> {
        if t < self.start_time() || t > self.end_time() {
            return Err(TrajError::TimeOutOfRange { t, start: self.start_time(), end: self.end_time() });
        }
        let idx = self.waypoints.partition_point(|w| w.time <= t);
        Ok(idx.clamp(1, self.waypoints.len() - 1) - 1)
    }

    /// Position, velocity, and acceleration at time `t`.
    ///
    /// Knot times reproduce the stored waypoint exactly rather than through
    /// the cubic arithmetic, so resampling at knots is lossless.
    pub fn sample(&self, t: f64) -> Result<(RobotConfig, RobotConfig, RobotConfig), TrajError> {
        let seg = self.segment_index(t)?;
        let a = &self.waypoints[seg];
        let b = &self.waypoints[seg + 1];
        if t == a.time {
            let acc = self.segment_accel(seg, 0.0);
            return Ok((a.q.clone(), a.qdot.clone(), acc));
        }
        if t == b.time {
            let acc = self.segment_accel(seg, 1.0);
            return Ok((b.q.clone(), b.qdot.clone(), acc));
        }
        let h = b.time - a.time;
        let s = (t - a.time) / h;
        let (h00, h10, h01, h11) = hermite_basis(s);
        let (d00, d10, d01, d11) = hermite_basis_d(s);
        let (dd00, dd10, dd01, dd11) = hermite_basis_dd(s);
        let q = &a.q * h00 + &a.qdot * (h10 * h) + &b.q * h01 + &b.qdot * (h11 * h);
        let qdot = (&a.q * d00 + &a.qdot * (d10 * h) + &b.q * d01 + &b.qdot * (d11 * h)) / h;
        let qddot = (&a.q * dd00 + &a.qdot * (dd10 * h) + &b.q * dd01 + &b.qdot * (dd11 * h)) / (h * h);
        Ok((q, qdot, qddot))
    }

    fn segment_accel(&self, seg: usize, s: f64) -> RobotConfig {
        let a = &self.waypoints[seg];
        let b = &self.waypoints[seg + 1];
        let h = b.time - a.time;
        let (dd00, dd10, dd01, dd11) = hermite_basis_dd(s);
        (&a.q * dd00 + &a.qdot * (dd10 * h) + &b.q * dd01 + &b.qdot * (dd11 * h)) / (h * h)
    }

    /// Same trajectory with all knot times shifted by `offset`.
    pub fn shift_time(&self, offset: f64) -> Trajectory {
        let waypoints = self
            .waypoints
            .iter()
            .map(|w| Waypoint::new(w.q.clone(), w.qdot.clone(), w.time + offset))
            .collect();
        Trajectory { waypoints }
    }

    /// Serializes as `trajdump 1` text: a header, then one row per waypoint
    /// holding time, positions, velocities.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "trajdump 1");
        let _ = writeln!(out, "dof {}", self.dof());
        let _ = writeln!(out, "waypoints {}", self.waypoints.len());
        let _ = writeln!(out, "data");
        for w in &self.waypoints {
            let _ = write!(out, "{}", w.time);
            for v in w.q.iter() {
                let _ = write!(out, " {v}");
            }
            for v in w.qdot.iter() {
                let _ = write!(out, " {v}");
            }
            let _ = writeln!(out);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), TrajError> {
        std::fs::write(path, self.to_text()).map_err(|e| TrajError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TrajError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrajError::Io(e.to_string()))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, path: &str) -> Result<Self, TrajError> {
        let err = |line: usize, msg: String| TrajError::Parse { path: path.to_string(), line, msg };
        let mut dof: Option<usize> = None;
        let mut expected: Option<usize> = None;
        let mut waypoints = Vec::new();
        let mut in_data = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !in_data {
                let mut parts = line.split_whitespace();
                let key = parts.next().unwrap();
                match key {
                    "trajdump" => {
                        let v = parts.next().ok_or_else(|| err(line_no, "missing version".into()))?;
                        if v != "1" {
                            return Err(err(line_no, format!("unsupported version {v}")));
                        }
                    }
                    "dof" => {
                        let v = parts.next().ok_or_else(|| err(line_no, "missing dof count".into()))?;
                        dof = Some(v.parse().map_err(|_| err(line_no, format!("bad dof count {v}")))?);
                    }
                    "waypoints" => {
                        let v = parts.next().ok_or_else(|| err(line_no, "missing waypoint count".into()))?;
                        expected = Some(v.parse().map_err(|_| err(line_no, format!("bad waypoint count {v}")))?);
                    }
                    "data" => in_data = true,
                    other => return Err(err(line_no, format!("unknown header field {other}"))),
                }
                continue;
            }
            let dof = dof.ok_or_else(|| err(line_no, "data before dof header".into()))?;
            let nums: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
            let nums = nums.map_err(|e| err(line_no, format!("bad number: {e}")))?;
            if nums.len() != 1 + 2 * dof {
                return Err(err(line_no, format!("expected {} fields, got {}", 1 + 2 * dof, nums.len())));
            }
            let q = DVector::from_row_slice(&nums[1..1 + dof]);
            let qdot = DVector::from_row_slice(&nums[1 + dof..]);
            waypoints.push(Waypoint::new(q, qdot, nums[0]));
        }
        if let Some(n) = expected {
            if waypoints.len() != n {
                return Err(err(text.lines().count(), format!("expected {n} waypoints, parsed {}", waypoints.len())));
            }
        }
        Trajectory::new(waypoints).map_err(|e| err(0, e.to_string()))
    }
}

fn hermite_basis(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    )
}

fn hermite_basis_d(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    (
        6.0 * s2 - 6.0 * s,
        3.0 * s2 - 4.0 * s + 1.0,
        -6.0 * s2 + 6.0 * s,
        3.0 * s2 - 2.0 * s,
    )
}

fn hermite_basis_dd(s: f64) -> (f64, f64, f64, f64) {
    (
        12.0 * s - 6.0,
        6.0 * s - 4.0,
        -12.0 * s + 6.0,
        6.0 * s - 2.0,
    )
}

/// Straight-line seed from `q_start` to `q_goal` over `duration` seconds
/// with `segments` equal spans. Interior waypoints move at the uniform
/// velocity `(q_goal - q_start) / duration`; the endpoints are at rest so
/// the arm starts and stops cleanly.
pub fn straight_line_init(
    q_start: &RobotConfig,
    q_goal: &RobotConfig,
    duration: f64,
    segments: usize,
    start_time: f64,
) -> Result<Trajectory, TrajError> {
    if segments == 0 {
        return Err(TrajError::TooFewWaypoints(1));
    }
    let uniform = (q_goal - q_start) / duration;
    let zero = RobotConfig::zeros(q_start.len());
    let mut waypoints = Vec::with_capacity(segments + 1);
    for k in 0..=segments {
        let s = k as f64 / segments as f64;
        let q = q_start + (q_goal - q_start) * s;
        let qdot = if k == 0 || k == segments { zero.clone() } else { uniform.clone() };
        waypoints.push(Waypoint::new(q, qdot, start_time + s * duration));
    }
    Trajectory::new(waypoints)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LimitKind {
    Position,
    Velocity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimitViolation {
    pub time: f64,
    pub dof: usize,
    pub kind: LimitKind,
    pub value: f64,
}

/// Scans the trajectory at `samples_per_segment` points per segment (knots
/// included) and reports every joint limit or velocity limit excursion.
pub fn check_limits(traj: &Trajectory, model: &RobotModel, samples_per_segment: usize) -> Vec<LimitViolation> {
    let mut violations = Vec::new();
    let n = samples_per_segment.max(1);
    for seg in 0..traj.segment_count() {
        let t0 = traj.waypoints()[seg].time;
        let t1 = traj.waypoints()[seg + 1].time;
        for k in 0..=n {
            let t = t0 + (t1 - t0) * k as f64 / n as f64;
            let (q, qdot, _) = traj.sample(t).expect("sample inside span");
            for d in 0..traj.dof() {
                let lim = model.joint_limits(d);
                let vlim = model.velocity_limits(d);
                if q[d] < lim[0] - 1e-12 || q[d] > lim[1] + 1e-12 {
                    violations.push(LimitViolation { time: t, dof: d, kind: LimitKind::Position, value: q[d] });
                }
                if qdot[d] < vlim[0] - 1e-12 || qdot[d] > vlim[1] + 1e-12 {
                    violations.push(LimitViolation { time: t, dof: d, kind: LimitKind::Velocity, value: qdot[d] });
                }
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dv(vals: &[f64]) -> RobotConfig {
        DVector::from_row_slice(vals)
    }

    /// Coefficient-form oracle: the cubic through (p0, v0) at t=0 and
    /// (p1, v1) at t=h is a + b t + c t^2 + d t^3 with coefficients solved
    /// from the boundary conditions.
    fn cubic_oracle(p0: f64, v0: f64, p1: f64, v1: f64, h: f64, t: f64) -> (f64, f64, f64) {
        let a = p0;
        let b = v0;
        let c = (3.0 * (p1 - p0) / (h * h)) - (2.0 * v0 + v1) / h;
        let d = (2.0 * (p0 - p1) / (h * h * h)) + (v0 + v1) / (h * h);
        (
            a + b * t + c * t * t + d * t * t * t,
            b + 2.0 * c * t + 3.0 * d * t * t,
            2.0 * c + 6.0 * d * t,
        )
    }

    #[test]
    fn matches_coefficient_oracle() {
        let traj = Trajectory::new(vec![
            Waypoint::new(dv(&[0.2, -1.0]), dv(&[0.5, 0.3]), 1.0),
            Waypoint::new(dv(&[1.4, 0.7]), dv(&[-0.2, 0.0]), 2.5),
            Waypoint::new(dv(&[0.9, 1.2]), dv(&[0.0, -0.4]), 4.0),
        ])
        .unwrap();
        for &t in &[1.0, 1.3, 1.77, 2.2, 2.5, 2.9, 3.6, 4.0] {
            let (q, qdot, qddot) = traj.sample(t).unwrap();
            // An interior knot belongs to the segment it opens, matching
            // segment_index; acceleration jumps there so the side matters.
            let (seg, t0, h) = if t < 2.5 { (0, 1.0, 1.5) } else { (1, 2.5, 1.5) };
            for d in 0..2 {
                let w0 = &traj.waypoints()[seg];
                let w1 = &traj.waypoints()[seg + 1];
                let (p, v, acc) = cubic_oracle(w0.q[d], w0.qdot[d], w1.q[d], w1.qdot[d], h, t - t0);
                assert_relative_eq!(q[d], p, epsilon = 1e-10);
                assert_relative_eq!(qdot[d], v, epsilon = 1e-10);
                assert_relative_eq!(qddot[d], acc, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn knots_reproduce_stored_values_exactly() {
        let w0 = Waypoint::new(dv(&[0.1, 0.2, 0.3]), dv(&[1.0, -1.0, 0.5]), 0.0);
        let w1 = Waypoint::new(dv(&[0.7, -0.1, 0.9]), dv(&[0.0, 0.2, -0.3]), 0.7);
        let w2 = Waypoint::new(dv(&[0.2, 0.4, 0.1]), dv(&[0.0, 0.0, 0.0]), 1.9);
        let traj = Trajectory::new(vec![w0.clone(), w1.clone(), w2.clone()]).unwrap();
        for w in [&w0, &w1, &w2] {
            let (q, qdot, _) = traj.sample(w.time).unwrap();
            assert_eq!(q, w.q);
            assert_eq!(qdot, w.qdot);
        }
    }

    #[test]
    fn rejects_malformed_waypoint_lists() {
        assert_eq!(
            Trajectory::new(vec![Waypoint::new(dv(&[0.0]), dv(&[0.0]), 0.0)]),
            Err(TrajError::TooFewWaypoints(1))
        );
        let err = Trajectory::new(vec![
            Waypoint::new(dv(&[0.0]), dv(&[0.0]), 0.0),
            Waypoint::new(dv(&[1.0]), dv(&[0.0]), 0.0),
        ])
        .unwrap_err();
        assert!(matches!(err, TrajError::NonMonotonicTime { .. }));
        let err = Trajectory::new(vec![
            Waypoint::new(dv(&[0.0]), dv(&[0.0]), 0.0),
            Waypoint::new(dv(&[1.0, 2.0]), dv(&[0.0, 0.0]), 1.0),
        ])
        .unwrap_err();
        assert!(matches!(err, TrajError::DofMismatch { index: 1, .. }));
    }

    #[test]
    fn sampling_outside_span_errors() {
        let traj = straight_line_init(&dv(&[0.0]), &dv(&[1.0]), 2.0, 4, 0.0).unwrap();
        assert!(matches!(traj.sample(-0.1), Err(TrajError::TimeOutOfRange { .. })));
        assert!(matches!(traj.sample(2.1), Err(TrajError::TimeOutOfRange { .. })));
        assert!(traj.sample(0.0).is_ok());
        assert!(traj.sample(2.0).is_ok());
    }

    #[test]
    fn straight_line_seed_is_straight_and_comes_to_rest() {
        let qs = dv(&[0.0, -1.0]);
        let qg = dv(&[2.0, 1.0]);
        let traj = straight_line_init(&qs, &qg, 4.0, 5, 0.0).unwrap();
        assert_eq!(traj.waypoints().len(), 6);
        let (q0, v0, _) = traj.sample(0.0).unwrap();
        let (qn, vn, _) = traj.sample(4.0).unwrap();
        assert_eq!(q0, qs);
        assert_eq!(qn, qg);
        assert_eq!(v0, dv(&[0.0, 0.0]));
        assert_eq!(vn, dv(&[0.0, 0.0]));
        // Interior knots sit exactly on the chord with the uniform velocity.
        for k in 1..5 {
            let w = &traj.waypoints()[k];
            let s = k as f64 / 5.0;
            assert_relative_eq!(w.q[0], 2.0 * s, epsilon = 1e-12);
            assert_relative_eq!(w.qdot[0], 0.5, epsilon = 1e-12);
            assert_relative_eq!(w.qdot[1], 0.5, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn time_shift_commutes_with_sampling(offset in -10.0f64..10.0, s in 0.0f64..1.0) {
            let traj = Trajectory::new(vec![
                Waypoint::new(dv(&[0.3, -0.4]), dv(&[0.1, 0.9]), 0.0),
                Waypoint::new(dv(&[1.1, 0.6]), dv(&[-0.5, 0.0]), 1.3),
                Waypoint::new(dv(&[0.0, 0.0]), dv(&[0.0, 0.0]), 2.0),
            ]).unwrap();
            let shifted = traj.shift_time(offset);
            let t = 2.0 * s;
            let (q_a, v_a, acc_a) = traj.sample(t).unwrap();
            let (q_b, v_b, acc_b) = shifted.sample(t + offset).unwrap();
            for d in 0..2 {
                prop_assert!((q_a[d] - q_b[d]).abs() < 1e-9);
                prop_assert!((v_a[d] - v_b[d]).abs() < 1e-9);
                prop_assert!((acc_a[d] - acc_b[d]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn dump_round_trips_byte_identically() {
        let traj = Trajectory::new(vec![
            Waypoint::new(dv(&[0.1, 0.2]), dv(&[-0.3, 1.0 / 3.0]), 0.0),
            Waypoint::new(dv(&[std::f64::consts::PI, -1e-17]), dv(&[0.0, 2.5]), 0.503),
        ])
        .unwrap();
        let text = traj.to_text();
        let parsed = Trajectory::parse(&text, "mem").unwrap();
        assert_eq!(parsed, traj);
        assert_eq!(parsed.to_text(), text);
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "trajdump 1\ndof 2\nwaypoints 2\ndata\n0.0 1.0 2.0 0.0 0.0\n1.0 oops 2.0 0.0 0.0\n";
        let err = Trajectory::parse(text, "bad.traj").unwrap_err();
        match err {
            TrajError::Parse { path, line, .. } => {
                assert_eq!(path, "bad.traj");
                assert_eq!(line, 6);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn limit_checker_flags_overspeed_and_excursion() {
        use crate::geom::{Capsule, Point3, Shape, Vector3};
        use crate::robot::{CameraMount, JointSpec, RobotModel};
        use nalgebra::{Isometry3, Translation3, UnitQuaternion};

        let joint = |lim: [f64; 2], vlim: [f64; 2]| {
            JointSpec::new(
                Vector3::z(),
                Isometry3::from_parts(Translation3::new(0.0, 0.0, 0.3), UnitQuaternion::identity()),
                lim,
                vlim,
            )
            .unwrap()
        };
        let shape = Shape::Capsule(Capsule {
            a: Point3::origin(),
            b: Point3::new(0.0, 0.0, 0.3),
            radius: 0.05,
        });
        let model = RobotModel::new(
            vec![joint([-1.0, 1.0], [-0.5, 0.5])],
            vec![(1, shape)],
            Isometry3::identity(),
            CameraMount { link: 1, local: Isometry3::identity() },
        )
        .unwrap();

        // Stays inside both bounds.
        let ok = straight_line_init(&dv(&[0.0]), &dv(&[0.8]), 4.0, 4, 0.0).unwrap();
        assert!(check_limits(&ok, &model, 8).is_empty());

        // Same swing in half the time doubles the velocity past the cap.
        let fast = straight_line_init(&dv(&[0.0]), &dv(&[0.8]), 1.0, 4, 0.0).unwrap();
        let violations = check_limits(&fast, &model, 8);
        assert!(violations.iter().any(|v| v.kind == LimitKind::Velocity));
        assert!(violations.iter().all(|v| v.dof == 0));

        // Walks outside the position interval.
        let out = straight_line_init(&dv(&[0.0]), &dv(&[1.5]), 4.0, 4, 0.0).unwrap();
        assert!(check_limits(&out, &model, 8).iter().any(|v| v.kind == LimitKind::Position));
    }

    #[test]
    fn dense_trapezoid_agrees_with_segment_samples() {
        // Independent check that velocity integrates back to displacement.
        let traj = Trajectory::new(vec![
            Waypoint::new(dv(&[0.0]), dv(&[0.4]), 0.0),
            Waypoint::new(dv(&[0.9]), dv(&[-0.1]), 1.1),
            Waypoint::new(dv(&[0.3]), dv(&[0.0]), 2.0),
        ])
        .unwrap();
        let n = 20_000;
        let mut integral = 0.0;
        let mut prev_v = traj.sample(0.0).unwrap().1[0];
        for k in 1..=n {
            let t = 2.0 * k as f64 / n as f64;
            let v = traj.sample(t).unwrap().1[0];
            integral += 0.5 * (prev_v + v) * (2.0 / n as f64);
            prev_v = v;
        }
        assert_relative_eq!(integral, 0.3 - 0.0, epsilon = 1e-6);
    }
}
