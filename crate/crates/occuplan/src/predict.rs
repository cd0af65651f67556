//! Short-horizon human motion prediction.
//!
//! Each joint runs an independent six-state Kalman filter (position and
//! velocity, constant-velocity process). The occlusion report gates the
//! measurement step: a joint the camera cannot see gets no measurement, its
//! covariance inflates, and its prediction coasts ballistically on the last
//! believed velocity. That coupling is the whole point of the library; when
//! the arm blocks the camera, predictions quietly rot, and the planner
//! should feel that through the capsule radii.

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Matrix6x3, Point3 as NaPoint3, Vector3 as NaVector3, Vector6};
use thiserror::Error;

use crate::geom::Point3;
use crate::human::{SkeletonFrame, SkeletonSequence, JOINT_COUNT};
use crate::occlusion::OcclusionReport;

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("horizon {horizon} is not an integer multiple of step {step}")]
    HorizonMismatch { horizon: f64, step: f64 },
    #[error("horizon and step must be positive and finite")]
    BadHorizon,
    #[error("predictor needs at least two ingested frames, has {0}")]
    Uninitialized(usize),
    #[error("frame time {t} does not advance past the previous frame {prev}")]
    NonMonotonicFrame { t: f64, prev: f64 },
    #[error("time {t} is not one of the predicted instants")]
    NotAPredictedTime { t: f64 },
    #[error("truth sequence does not cover time {t}")]
    TruthOutOfRange { t: f64 },
}

/// How far and how densely to predict.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionHorizon {
    pub horizon: f64,
    pub step: f64,
    pub points: usize,
}

impl PredictionHorizon {
    pub fn new(horizon: f64, step: f64) -> Result<Self, PredictError> {
        if !(horizon > 0.0 && step > 0.0 && horizon.is_finite() && step.is_finite()) {
            return Err(PredictError::BadHorizon);
        }
        let ratio = horizon / step;
        let points = ratio.round();
        if (ratio - points).abs() > 1e-9 || points < 1.0 {
            return Err(PredictError::HorizonMismatch { horizon, step });
        }
        Ok(PredictionHorizon { horizon, step, points: points as usize })
    }
}

impl Default for PredictionHorizon {
    /// Three seconds ahead in half-second steps: six predicted instants.
    fn default() -> Self {
        PredictionHorizon { horizon: 3.0, step: 0.5, points: 6 }
    }
}

/// Predicted joint positions and confidences at the anchor instant (the
/// time of the last ingested frame) plus each horizon instant.
#[derive(Clone, Debug)]
pub struct PredictedHuman {
    pub anchor_time: f64,
    pub anchor_joints: [Point3; JOINT_COUNT],
    pub anchor_confidences: [f64; JOINT_COUNT],
    /// Strictly increasing absolute times, `points` of them.
    pub times: Vec<f64>,
    pub joints: Vec<[Point3; JOINT_COUNT]>,
    pub confidences: Vec<[f64; JOINT_COUNT]>,
}

impl PredictedHuman {
    pub fn start_time(&self) -> f64 {
        self.anchor_time
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap_or(&self.anchor_time)
    }

    pub fn covers(&self, t0: f64, t1: f64) -> bool {
        t0 >= self.start_time() - 1e-9 && t1 <= self.end_time() + 1e-9
    }

    /// Joints and confidences at absolute time `t`, piecewise-linear
    /// between the anchor and the horizon points.
    pub fn sample(&self, t: f64) -> ([Point3; JOINT_COUNT], [f64; JOINT_COUNT]) {
        let clamped = t.clamp(self.start_time(), self.end_time());
        let (t0, j0, c0, t1, j1, c1) = self.bracket(clamped);
        if t1 == t0 {
            return (*j0, *c0);
        }
        let s = (clamped - t0) / (t1 - t0);
        let mut joints = [Point3::origin(); JOINT_COUNT];
        let mut confs = [0.0; JOINT_COUNT];
        for i in 0..JOINT_COUNT {
            joints[i] = j0[i] + (j1[i] - j0[i]) * s;
            confs[i] = c0[i] + (c1[i] - c0[i]) * s;
        }
        (joints, confs)
    }

    #[allow(clippy::type_complexity)]
    fn bracket(
        &self,
        t: f64,
    ) -> (f64, &[Point3; JOINT_COUNT], &[f64; JOINT_COUNT], f64, &[Point3; JOINT_COUNT], &[f64; JOINT_COUNT]) {
        if self.times.is_empty() || t <= self.times[0] {
            let t1 = *self.times.first().unwrap_or(&self.anchor_time);
            let j1 = self.joints.first().unwrap_or(&self.anchor_joints);
            let c1 = self.confidences.first().unwrap_or(&self.anchor_confidences);
            return (self.anchor_time, &self.anchor_joints, &self.anchor_confidences, t1, j1, c1);
        }
        let idx = self.times.partition_point(|&x| x <= t).min(self.times.len() - 1);
        let lo = idx - 1;
        (
            self.times[lo],
            &self.joints[lo],
            &self.confidences[lo],
            self.times[idx],
            &self.joints[idx],
            &self.confidences[idx],
        )
    }
}

/// Anything that can ingest tracked frames and emit horizon predictions.
/// The planner only talks to this trait, so a learned model can slot in
/// beside the Kalman baseline.
pub trait MotionPredictor {
    /// Ingests one frame. The report gates which joints are measured.
    fn update(&mut self, frame: &SkeletonFrame, report: &OcclusionReport) -> Result<(), PredictError>;

    /// Predicts from the last ingested frame outward.
    fn predict(&self, horizon: &PredictionHorizon, report: &OcclusionReport) -> Result<PredictedHuman, PredictError>;

    /// True once enough frames arrived for velocity to be observable.
    fn is_initialized(&self) -> bool;
}

/// Noise and gating parameters for the Kalman predictor.
#[derive(Clone, Copy, Debug)]
pub struct CvKalmanParams {
    /// Process noise on position, m^2 per step.
    pub process_pos: f64,
    /// Process noise on velocity, (m/s)^2 per step.
    pub process_vel: f64,
    /// Measurement noise, m^2.
    pub measurement: f64,
    /// Confidence decay base per second of lookahead; 1.0 disables decay.
    pub gamma: f64,
    /// Joints below this confidence get no measurement update.
    pub confidence_threshold: f64,
}

impl Default for CvKalmanParams {
    fn default() -> Self {
        CvKalmanParams {
            process_pos: 1e-4,
            process_vel: 1e-2,
            measurement: 1e-4,
            gamma: 1.0,
            confidence_threshold: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
struct JointFilter {
    /// Stacked position then velocity.
    x: Vector6<f64>,
    p: Matrix6<f64>,
}

impl JointFilter {
    fn new(pos: &Point3, params: &CvKalmanParams) -> Self {
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&pos.coords);
        let mut p = Matrix6::zeros();
        for i in 0..3 {
            p[(i, i)] = params.measurement;
            p[(i + 3, i + 3)] = 1.0;
        }
        JointFilter { x, p }
    }

    fn position(&self) -> Point3 {
        NaPoint3::from(NaVector3::new(self.x[0], self.x[1], self.x[2]))
    }

    fn advance(&mut self, dt: f64, params: &CvKalmanParams) {
        let mut f = Matrix6::identity();
        for i in 0..3 {
            f[(i, i + 3)] = dt;
        }
        let mut q = Matrix6::zeros();
        for i in 0..3 {
            q[(i, i)] = params.process_pos;
            q[(i + 3, i + 3)] = params.process_vel;
        }
        self.x = f * self.x;
        self.p = f * self.p * f.transpose() + q;
    }

    fn measure(&mut self, z: &Point3, params: &CvKalmanParams) {
        let mut h = Matrix3x6::zeros();
        for i in 0..3 {
            h[(i, i)] = 1.0;
        }
        let r = Matrix3::identity() * params.measurement;
        let s = h * self.p * h.transpose() + r;
        let s_inv = s.try_inverse().expect("innovation covariance is SPD by construction");
        let k: Matrix6x3<f64> = self.p * h.transpose() * s_inv;
        let innovation = z.coords - h * self.x;
        self.x += k * innovation;
        // Joseph form keeps the covariance symmetric positive definite.
        let ikh = Matrix6::identity() - k * h;
        self.p = ikh * self.p * ikh.transpose() + k * r * k.transpose();
        self.p = (self.p + self.p.transpose()) * 0.5;
    }

    fn predict_at(&self, dt: f64) -> Point3 {
        NaPoint3::from(NaVector3::new(
            self.x[0] + self.x[3] * dt,
            self.x[1] + self.x[4] * dt,
            self.x[2] + self.x[5] * dt,
        ))
    }
}

/// Per-joint constant-velocity Kalman predictor.
#[derive(Clone, Debug)]
pub struct CvKalmanPredictor {
    pub params: CvKalmanParams,
    filters: Vec<Option<JointFilter>>,
    last_time: Option<f64>,
    frames_seen: usize,
}

impl CvKalmanPredictor {
    pub fn new(params: CvKalmanParams) -> Self {
        CvKalmanPredictor {
            params,
            filters: vec![None; JOINT_COUNT],
            last_time: None,
            frames_seen: 0,
        }
    }

    /// Covariance trace of one joint's filter; tests watch it inflate
    /// through occlusion windows.
    pub fn covariance_trace(&self, joint: usize) -> Option<f64> {
        self.filters[joint].as_ref().map(|f| f.p.trace())
    }

    /// Current filtered velocity estimate for a joint.
    pub fn velocity(&self, joint: usize) -> Option<crate::geom::Vector3> {
        self.filters[joint]
            .as_ref()
            .map(|f| NaVector3::new(f.x[3], f.x[4], f.x[5]))
    }
}

impl MotionPredictor for CvKalmanPredictor {
    fn update(&mut self, frame: &SkeletonFrame, report: &OcclusionReport) -> Result<(), PredictError> {
        if let Some(prev) = self.last_time {
            if frame.time <= prev {
                return Err(PredictError::NonMonotonicFrame { t: frame.time, prev });
            }
        }
        let dt = self.last_time.map(|prev| frame.time - prev);
        for j in 0..JOINT_COUNT {
            let visible = frame.tracked[j] && report.per_joint_confidence[j] >= self.params.confidence_threshold;
            match (&mut self.filters[j], dt) {
                (Some(filter), Some(dt)) => {
                    filter.advance(dt, &self.params);
                    if visible {
                        filter.measure(&frame.joints[j], &self.params);
                    }
                }
                (slot @ None, _) if visible => {
                    *slot = Some(JointFilter::new(&frame.joints[j], &self.params));
                }
                _ => {}
            }
        }
        self.last_time = Some(frame.time);
        self.frames_seen += 1;
        Ok(())
    }

    fn predict(&self, horizon: &PredictionHorizon, report: &OcclusionReport) -> Result<PredictedHuman, PredictError> {
        if !self.is_initialized() {
            return Err(PredictError::Uninitialized(self.frames_seen));
        }
        let t0 = self.last_time.unwrap();
        let mut anchor_joints = [Point3::origin(); JOINT_COUNT];
        let mut anchor_conf = [0.0; JOINT_COUNT];
        for j in 0..JOINT_COUNT {
            if let Some(f) = &self.filters[j] {
                anchor_joints[j] = f.position();
                anchor_conf[j] = report.per_joint_confidence[j].clamp(0.0, 1.0);
            }
        }
        let mut times = Vec::with_capacity(horizon.points);
        let mut joints = Vec::with_capacity(horizon.points);
        let mut confidences = Vec::with_capacity(horizon.points);
        for k in 1..=horizon.points {
            let dt = horizon.step * k as f64;
            times.push(t0 + dt);
            let mut js = [Point3::origin(); JOINT_COUNT];
            let mut cs = [0.0; JOINT_COUNT];
            let decay = self.params.gamma.powf(dt);
            for j in 0..JOINT_COUNT {
                if let Some(f) = &self.filters[j] {
                    js[j] = f.predict_at(dt);
                    cs[j] = (anchor_conf[j] * decay).clamp(0.0, 1.0);
                }
            }
            joints.push(js);
            confidences.push(cs);
        }
        Ok(PredictedHuman {
            anchor_time: t0,
            anchor_joints,
            anchor_confidences: anchor_conf,
            times,
            joints,
            confidences,
        })
    }

    fn is_initialized(&self) -> bool {
        self.frames_seen >= 2 && self.filters.iter().any(Option::is_some)
    }
}

/// Mean Euclidean error over all joints between a prediction at time `t`
/// (which must be one of the predicted instants) and the ground truth
/// sequence interpolated at the same time.
pub fn error_distance(predicted: &PredictedHuman, truth: &SkeletonSequence, t: f64) -> Result<f64, PredictError> {
    let idx = predicted
        .times
        .iter()
        .position(|&x| (x - t).abs() < 1e-9)
        .ok_or(PredictError::NotAPredictedTime { t })?;
    let truth_frame = truth.frame_at(t).map_err(|_| PredictError::TruthOutOfRange { t })?;
    let sum: f64 = (0..JOINT_COUNT)
        .map(|j| (predicted.joints[idx][j] - truth_frame.joints[j]).norm())
        .sum();
    Ok(sum / JOINT_COUNT as f64)
}
