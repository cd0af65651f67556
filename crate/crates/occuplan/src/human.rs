//! Human skeleton tracking data: frames, sequences, and capsule bodies.
//!
//! The tracker delivers 23 named joints per frame. Bones connect joints in
//! a fixed 22-edge tree and each bone becomes a capsule whose radius widens
//! as tracking confidence drops, so a poorly seen human simply occupies
//! more of the planner's space.
//!
//! Sequences round-trip through a line-oriented text format (`.skel`):
//!
//! ```text
//! skelseq 1
//! frame_rate 30
//! coordinate_frame world
//! action walking
//! joints spine_base spine_mid ... hand_tip_right
//! bones 0-1 1-20 ...
//! data
//! <time> x y z tracked  x y z tracked  ... (23 joint tuples per line)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::geom::{Capsule, Point3};

/// Number of joints the tracker reports per frame.
pub const JOINT_COUNT: usize = 23;

/// Canonical joint order. Files with a different joint list are remapped
/// onto this order at load time via a `joint_map` header.
pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "spine_base",
    "spine_mid",
    "neck",
    "head",
    "shoulder_left",
    "elbow_left",
    "wrist_left",
    "hand_left",
    "shoulder_right",
    "elbow_right",
    "wrist_right",
    "hand_right",
    "hip_left",
    "knee_left",
    "ankle_left",
    "foot_left",
    "hip_right",
    "knee_right",
    "ankle_right",
    "foot_right",
    "spine_shoulder",
    "hand_tip_left",
    "hand_tip_right",
];

/// Joints that the hand-centric labeling rule watches.
pub const HAND_JOINTS: [usize; 4] = [7, 11, 21, 22];

/// Default 22-bone tree over the canonical joints.
pub fn default_bone_pairs() -> Vec<(usize, usize)> {
    vec![
        (0, 1),
        (1, 20),
        (20, 2),
        (2, 3),
        (20, 4),
        (4, 5),
        (5, 6),
        (6, 7),
        (7, 21),
        (20, 8),
        (8, 9),
        (9, 10),
        (10, 11),
        (11, 22),
        (0, 12),
        (12, 13),
        (13, 14),
        (14, 15),
        (0, 16),
        (16, 17),
        (17, 18),
        (18, 19),
    ]
}

#[derive(Debug, Error)]
pub enum HumanError {
    #[error("query time {t} outside sequence range [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("sequence needs at least one frame")]
    Empty,
    #[error("frame times must be strictly increasing (frame {index})")]
    NonMonotonicTime { index: usize },
    #[error("capsule radii must satisfy r0 >= r1, got r0={r0} r1={r1}")]
    RadiusOrder { r0: f64, r1: f64 },
    #[error("bone ({a}, {b}) references a joint outside 0..{}", JOINT_COUNT)]
    BadBone { a: usize, b: usize },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One tracker frame: a timestamp plus position and tracked-flag per joint.
/// Positions of untracked joints are carried along but carry no meaning.
#[derive(Clone, Debug)]
pub struct SkeletonFrame {
    pub time: f64,
    pub joints: [Point3; JOINT_COUNT],
    pub tracked: [bool; JOINT_COUNT],
}

impl SkeletonFrame {
    pub fn fully_tracked(time: f64, joints: [Point3; JOINT_COUNT]) -> Self {
        SkeletonFrame { time, joints, tracked: [true; JOINT_COUNT] }
    }
}

/// A recorded skeleton stream with its bone tree and action label.
#[derive(Clone, Debug)]
pub struct SkeletonSequence {
    frames: Vec<SkeletonFrame>,
    pub frame_rate: f64,
    pub coordinate_frame: String,
    pub bone_pairs: Vec<(usize, usize)>,
    pub action_label: String,
}

impl SkeletonSequence {
    pub fn new(
        frames: Vec<SkeletonFrame>,
        frame_rate: f64,
        bone_pairs: Vec<(usize, usize)>,
        action_label: impl Into<String>,
    ) -> Result<Self, HumanError> {
        if frames.is_empty() {
            return Err(HumanError::Empty);
        }
        for i in 1..frames.len() {
            if frames[i].time <= frames[i - 1].time {
                return Err(HumanError::NonMonotonicTime { index: i });
            }
        }
        for &(a, b) in &bone_pairs {
            if a >= JOINT_COUNT || b >= JOINT_COUNT {
                return Err(HumanError::BadBone { a, b });
            }
        }
        Ok(SkeletonSequence {
            frames,
            frame_rate,
            coordinate_frame: "world".into(),
            bone_pairs,
            action_label: action_label.into(),
        })
    }

    pub fn frames(&self) -> &[SkeletonFrame] {
        &self.frames
    }

    pub fn start_time(&self) -> f64 {
        self.frames[0].time
    }

    pub fn end_time(&self) -> f64 {
        self.frames[self.frames.len() - 1].time
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    /// Frame at time `t`, linearly interpolated between stored frames. A
    /// joint counts as tracked only when it is tracked in both bracketing
    /// frames. Exactly at a stored timestamp the stored frame is returned.
    pub fn frame_at(&self, t: f64) -> Result<SkeletonFrame, HumanError> {
        let (lo, hi) = (self.start_time(), self.end_time());
        if t < lo || t > hi {
            return Err(HumanError::TimeOutOfRange { t, lo, hi });
        }
        let idx = self.frames.partition_point(|f| f.time <= t);
        if idx == 0 {
            return Ok(self.frames[0].clone());
        }
        let prev = &self.frames[idx - 1];
        if prev.time == t || idx == self.frames.len() {
            return Ok(prev.clone());
        }
        let next = &self.frames[idx];
        let s = (t - prev.time) / (next.time - prev.time);
        let mut joints = [Point3::origin(); JOINT_COUNT];
        let mut tracked = [false; JOINT_COUNT];
        for j in 0..JOINT_COUNT {
            joints[j] = prev.joints[j] + (next.joints[j] - prev.joints[j]) * s;
            tracked[j] = prev.tracked[j] && next.tracked[j];
        }
        Ok(SkeletonFrame { time: t, joints, tracked })
    }

    /// Serializes to the `.skel` text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("skelseq 1\n");
        let _ = writeln!(out, "frame_rate {}", self.frame_rate);
        let _ = writeln!(out, "coordinate_frame {}", self.coordinate_frame);
        let _ = writeln!(out, "action {}", self.action_label);
        let _ = writeln!(out, "joints {}", JOINT_NAMES.join(" "));
        let bones: Vec<String> = self.bone_pairs.iter().map(|(a, b)| format!("{a}-{b}")).collect();
        let _ = writeln!(out, "bones {}", bones.join(" "));
        out.push_str("data\n");
        for f in &self.frames {
            let _ = write!(out, "{}", f.time);
            for j in 0..JOINT_COUNT {
                let p = &f.joints[j];
                let _ = write!(out, " {} {} {} {}", p.x, p.y, p.z, u8::from(f.tracked[j]));
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), HumanError> {
        std::fs::write(path, self.to_text())
            .map_err(|e| HumanError::Io { path: path.display().to_string(), source: e })
    }

    pub fn load(path: &Path) -> Result<Self, HumanError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HumanError::Io { path: path.display().to_string(), source: e })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses the `.skel` format. `origin` only labels error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, HumanError> {
        let err = |line: usize, msg: String| HumanError::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();

        let (n, first) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let mut head = first.split_whitespace();
        if head.next() != Some("skelseq") {
            return Err(err(n + 1, "expected `skelseq <version>` header".into()));
        }
        match head.next() {
            Some("1") => {}
            other => return Err(err(n + 1, format!("unsupported version {other:?}"))),
        }

        let mut frame_rate = None;
        let mut action = String::from("unknown");
        let mut coordinate_frame = String::from("world");
        let mut joint_order: Option<Vec<String>> = None;
        let mut joint_map_names: Option<Vec<String>> = None;
        let mut bones: Option<Vec<(usize, usize)>> = None;
        let mut data_line = None;

        for (n, line) in &mut lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            match key {
                "frame_rate" => {
                    let v: f64 = rest.trim().parse().map_err(|_| err(n + 1, format!("bad frame_rate `{rest}`")))?;
                    if !(v.is_finite() && v > 0.0) {
                        return Err(err(n + 1, "frame_rate must be positive".into()));
                    }
                    frame_rate = Some(v);
                }
                "coordinate_frame" => coordinate_frame = rest.trim().to_string(),
                "action" => action = rest.trim().to_string(),
                "joints" => {
                    joint_order = Some(rest.split_whitespace().map(str::to_string).collect());
                }
                "joint_map" => {
                    // 23 entries in canonical slot order, each a source
                    // joint name or `-` for absent; resolved after the
                    // header is complete.
                    let entries: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                    if entries.len() != JOINT_COUNT {
                        return Err(err(n + 1, format!("joint_map needs {JOINT_COUNT} entries, got {}", entries.len())));
                    }
                    joint_map_names = Some(entries);
                }
                "bones" => {
                    let mut parsed = Vec::new();
                    for tok in rest.split_whitespace() {
                        let (a, b) = tok
                            .split_once('-')
                            .ok_or_else(|| err(n + 1, format!("bad bone `{tok}`, expected a-b")))?;
                        let a: usize = a.parse().map_err(|_| err(n + 1, format!("bad bone index `{a}`")))?;
                        let b: usize = b.parse().map_err(|_| err(n + 1, format!("bad bone index `{b}`")))?;
                        parsed.push((a, b));
                    }
                    bones = Some(parsed);
                }
                "data" => {
                    data_line = Some(n + 1);
                    break;
                }
                other => return Err(err(n + 1, format!("unknown header field `{other}`"))),
            }
        }

        let frame_rate = frame_rate.ok_or_else(|| err(1, "missing frame_rate header".into()))?;
        let data_line = data_line.ok_or_else(|| err(1, "missing data section".into()))?;

        // Column mapping: identity for canonical files, joint_map otherwise.
        let source_names = joint_order.unwrap_or_else(|| JOINT_NAMES.iter().map(|s| s.to_string()).collect());
        let n_source = source_names.len();
        let column_of: Vec<Option<usize>> = if n_source == JOINT_COUNT
            && source_names.iter().zip(JOINT_NAMES).all(|(a, b)| a == b)
        {
            (0..JOINT_COUNT).map(Some).collect()
        } else {
            let names = joint_map_names.ok_or_else(|| {
                err(data_line, format!("joint list differs from canonical order; a joint_map header with {JOINT_COUNT} entries is required"))
            })?;
            let mut map = Vec::with_capacity(JOINT_COUNT);
            for name in &names {
                if name == "-" {
                    map.push(None);
                } else {
                    let idx = source_names.iter().position(|s| s == name).ok_or_else(|| {
                        err(data_line, format!("joint_map entry `{name}` not in the file's joint list"))
                    })?;
                    map.push(Some(idx));
                }
            }
            map
        };

        let mut frames = Vec::new();
        for (n, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let expect = 1 + 4 * n_source;
            if fields.len() != expect {
                return Err(err(n + 1, format!("expected {expect} fields, got {}", fields.len())));
            }
            let parse_f = |s: &str, what: &str| -> Result<f64, HumanError> {
                let v: f64 = s.parse().map_err(|_| err(n + 1, format!("bad {what} `{s}`")))?;
                if !v.is_finite() {
                    return Err(err(n + 1, format!("{what} must be finite")));
                }
                Ok(v)
            };
            let time = parse_f(fields[0], "time")?;
            let mut joints = [Point3::origin(); JOINT_COUNT];
            let mut tracked = [false; JOINT_COUNT];
            for (slot, col) in column_of.iter().enumerate() {
                if let Some(col) = col {
                    let base = 1 + 4 * col;
                    joints[slot] = Point3::new(
                        parse_f(fields[base], "coordinate")?,
                        parse_f(fields[base + 1], "coordinate")?,
                        parse_f(fields[base + 2], "coordinate")?,
                    );
                    tracked[slot] = match fields[base + 3] {
                        "0" => false,
                        "1" => true,
                        other => return Err(err(n + 1, format!("bad tracked flag `{other}`"))),
                    };
                }
            }
            frames.push(SkeletonFrame { time, joints, tracked });
        }

        let mut seq = SkeletonSequence::new(
            frames,
            frame_rate,
            bones.unwrap_or_else(default_bone_pairs),
            action,
        )?;
        seq.coordinate_frame = coordinate_frame;
        Ok(seq)
    }
}

/// One bone capsule with the confidence that shaped its radius.
#[derive(Clone, Debug)]
pub struct BodyCapsule {
    pub capsule: Capsule,
    pub bone: (usize, usize),
    pub confidence: f64,
}

/// The human as a set of bone capsules for collision queries.
#[derive(Clone, Debug)]
pub struct HumanCapsuleBody {
    pub capsules: Vec<BodyCapsule>,
}

/// Confidence-averaged capsule radius for one bone: at full confidence the
/// tight radius `r1`, at zero confidence the inflated radius `r0`, linear in
/// between. `alpha` is the mean of the two endpoint joint confidences.
pub fn bone_radius(alpha: f64, r0: f64, r1: f64) -> f64 {
    (1.0 - alpha) * r0 + alpha * r1
}

/// Builds bone capsules from joint positions and per-joint confidences.
/// Requires `r0 >= r1`: low confidence must never shrink the body.
pub fn build_capsule_body(
    joints: &[Point3; JOINT_COUNT],
    confidences: &[f64; JOINT_COUNT],
    bone_pairs: &[(usize, usize)],
    r0: f64,
    r1: f64,
) -> Result<HumanCapsuleBody, HumanError> {
    if !(r0 >= r1 && r1 >= 0.0 && r0.is_finite()) {
        return Err(HumanError::RadiusOrder { r0, r1 });
    }
    let mut capsules = Vec::with_capacity(bone_pairs.len());
    for &(a, b) in bone_pairs {
        if a >= JOINT_COUNT || b >= JOINT_COUNT {
            return Err(HumanError::BadBone { a, b });
        }
        let alpha = 0.5 * (confidences[a] + confidences[b]);
        let alpha = alpha.clamp(0.0, 1.0);
        capsules.push(BodyCapsule {
            capsule: Capsule::new(joints[a], joints[b], bone_radius(alpha, r0, r1)),
            bone: (a, b),
            confidence: alpha,
        });
    }
    Ok(HumanCapsuleBody { capsules })
}
