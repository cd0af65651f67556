//! Synthetic skeleton sequences for tests, evaluation, and demo scenarios.
//!
//! A fixed standing posture is translated along a piecewise-linear floor
//! path. Every joint therefore moves with the same (piecewise-constant)
//! velocity, which gives the predictor exactly reproducible ground truth:
//! between path waypoints a constant-velocity model is not an
//! approximation, it is the data.

use crate::geom::{Point3, Vector3};
use crate::human::{default_bone_pairs, SkeletonFrame, SkeletonSequence, JOINT_COUNT};

/// Standing posture: joint offsets in meters from the floor point under the
/// body center. The figure faces -y (toward a robot placed at the origin
/// when walking in from +y), hands slightly forward of the torso.
pub fn standing_posture() -> [Vector3; JOINT_COUNT] {
    let mut p = [Vector3::zeros(); JOINT_COUNT];
    p[0] = Vector3::new(0.0, 0.0, 0.95); // spine_base
    p[1] = Vector3::new(0.0, 0.0, 1.20); // spine_mid
    p[2] = Vector3::new(0.0, 0.0, 1.50); // neck
    p[3] = Vector3::new(0.0, 0.0, 1.65); // head
    p[4] = Vector3::new(0.20, 0.0, 1.42); // shoulder_left
    p[5] = Vector3::new(0.26, -0.05, 1.16); // elbow_left
    p[6] = Vector3::new(0.28, -0.14, 0.94); // wrist_left
    p[7] = Vector3::new(0.28, -0.18, 0.88); // hand_left
    p[8] = Vector3::new(-0.20, 0.0, 1.42); // shoulder_right
    p[9] = Vector3::new(-0.26, -0.05, 1.16); // elbow_right
    p[10] = Vector3::new(-0.28, -0.14, 0.94); // wrist_right
    p[11] = Vector3::new(-0.28, -0.18, 0.88); // hand_right
    p[12] = Vector3::new(0.10, 0.0, 0.90); // hip_left
    p[13] = Vector3::new(0.11, 0.02, 0.50); // knee_left
    p[14] = Vector3::new(0.11, 0.0, 0.10); // ankle_left
    p[15] = Vector3::new(0.11, -0.10, 0.03); // foot_left
    p[16] = Vector3::new(-0.10, 0.0, 0.90); // hip_right
    p[17] = Vector3::new(-0.11, 0.02, 0.50); // knee_right
    p[18] = Vector3::new(-0.11, 0.0, 0.10); // ankle_right
    p[19] = Vector3::new(-0.11, -0.10, 0.03); // foot_right
    p[20] = Vector3::new(0.0, 0.0, 1.40); // spine_shoulder
    p[21] = Vector3::new(0.28, -0.21, 0.84); // hand_tip_left
    p[22] = Vector3::new(-0.28, -0.21, 0.84); // hand_tip_right
    p
}

/// Floor-path waypoint: (time, x, y). The body center passes through these
/// points, linearly interpolated in between and held at the ends.
pub type PathWaypoint = (f64, f64, f64);

fn path_position(waypoints: &[PathWaypoint], t: f64) -> Vector3 {
    let first = waypoints[0];
    let last = waypoints[waypoints.len() - 1];
    if t <= first.0 {
        return Vector3::new(first.1, first.2, 0.0);
    }
    if t >= last.0 {
        return Vector3::new(last.1, last.2, 0.0);
    }
    for w in waypoints.windows(2) {
        let (t0, x0, y0) = w[0];
        let (t1, x1, y1) = w[1];
        if t >= t0 && t <= t1 {
            let s = (t - t0) / (t1 - t0);
            return Vector3::new(x0 + (x1 - x0) * s, y0 + (y1 - y0) * s, 0.0);
        }
    }
    Vector3::new(last.1, last.2, 0.0)
}

/// Skeleton walking a piecewise-linear path. Waypoint times must be
/// strictly increasing; the sequence starts at the first waypoint time.
pub fn piecewise_walker(
    waypoints: &[PathWaypoint],
    duration: f64,
    frame_rate: f64,
    label: &str,
) -> SkeletonSequence {
    assert!(!waypoints.is_empty(), "need at least one path waypoint");
    assert!(
        waypoints.windows(2).all(|w| w[1].0 > w[0].0),
        "path waypoint times must be strictly increasing"
    );
    let posture = standing_posture();
    let t0 = waypoints[0].0;
    let n_frames = (duration * frame_rate).round() as usize;
    let mut frames = Vec::with_capacity(n_frames + 1);
    for k in 0..=n_frames {
        let t = t0 + k as f64 / frame_rate;
        let center = path_position(waypoints, t);
        let mut joints = [Point3::origin(); JOINT_COUNT];
        for (j, off) in posture.iter().enumerate() {
            joints[j] = Point3::from(center + off);
        }
        frames.push(SkeletonFrame::fully_tracked(t, joints));
    }
    SkeletonSequence::new(frames, frame_rate, default_bone_pairs(), label).unwrap()
}

/// Skeleton translating at exactly constant velocity, the predictor's
/// no-excuses ground truth.
pub fn constant_velocity_walker(
    start_xy: (f64, f64),
    velocity_xy: (f64, f64),
    duration: f64,
    frame_rate: f64,
) -> SkeletonSequence {
    let end = (
        start_xy.0 + velocity_xy.0 * duration,
        start_xy.1 + velocity_xy.1 * duration,
    );
    piecewise_walker(
        &[(0.0, start_xy.0, start_xy.1), (duration, end.0, end.1)],
        duration,
        frame_rate,
        "walking",
    )
}

/// Skeleton walking with one sharp velocity change at `turn_time`.
pub fn turning_walker(
    start_xy: (f64, f64),
    v1: (f64, f64),
    turn_time: f64,
    v2: (f64, f64),
    duration: f64,
    frame_rate: f64,
) -> SkeletonSequence {
    assert!(turn_time > 0.0 && turn_time < duration);
    let mid = (start_xy.0 + v1.0 * turn_time, start_xy.1 + v1.1 * turn_time);
    let end = (
        mid.0 + v2.0 * (duration - turn_time),
        mid.1 + v2.1 * (duration - turn_time),
    );
    piecewise_walker(
        &[
            (0.0, start_xy.0, start_xy.1),
            (turn_time, mid.0, mid.1),
            (duration, end.0, end.1),
        ],
        duration,
        frame_rate,
        "walking",
    )
}
