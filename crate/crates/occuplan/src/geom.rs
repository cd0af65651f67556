//! Collision primitives and distance queries.
//!
//! Two shape families cover everything the planner needs: capsules (robot
//! links, human limbs, rays with zero radius) and oriented boxes (furniture,
//! torsos of bulky robots). Penetration depth is the quantity of interest:
//! it is zero for disjoint shapes and grows smoothly with overlap, which is
//! what the squared-hinge collision costs integrate.
//!
//! Conventions:
//! * all lengths in meters, all types `f64`
//! * `penetration == 0.0` means disjoint or exactly touching
//! * constructors panic on non-finite input; code that parses untrusted
//!   data validates before constructing

use nalgebra::Unit;

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;
pub type Pose = nalgebra::Isometry3<f64>;
pub type UnitQuat = nalgebra::UnitQuaternion<f64>;

/// Axis sample count used to seed the interior-depth search in
/// [`box_capsule_penetration`].
pub const BOX_AXIS_SAMPLES: usize = 32;

const REFINE_ITERS: usize = 120;

fn finite3(v: &[f64; 3]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn assert_finite_point(p: &Point3, what: &str) {
    assert!(finite3(&[p.x, p.y, p.z]), "{what} has non-finite component");
}

/// Line segment between two points. Degenerate (zero-length) segments are
/// allowed and behave as points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: Point3,
    pub end: Point3,
}

impl Segment {
    pub fn new(start: Point3, end: Point3) -> Self {
        assert_finite_point(&start, "segment start");
        assert_finite_point(&end, "segment end");
        Segment { start, end }
    }

    pub fn point_at(&self, t: f64) -> Point3 {
        self.start + (self.end - self.start) * t
    }
}

/// Capsule: all points within `radius` of the axis segment `a..b`.
/// A sphere is the degenerate case `a == b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule {
    pub a: Point3,
    pub b: Point3,
    pub radius: f64,
}

impl Capsule {
    pub fn new(a: Point3, b: Point3, radius: f64) -> Self {
        assert_finite_point(&a, "capsule endpoint");
        assert_finite_point(&b, "capsule endpoint");
        assert!(radius.is_finite() && radius >= 0.0, "capsule radius must be finite and >= 0");
        Capsule { a, b, radius }
    }

    pub fn axis(&self) -> Segment {
        Segment { start: self.a, end: self.b }
    }

    /// Rigidly transformed copy.
    pub fn transformed(&self, pose: &Pose) -> Capsule {
        Capsule { a: pose * self.a, b: pose * self.b, radius: self.radius }
    }
}

/// Oriented box given by center, half-extents along its local axes, and a
/// unit-quaternion orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    pub center: Point3,
    pub half_extents: Vector3,
    pub orientation: UnitQuat,
}

impl OrientedBox {
    pub fn new(center: Point3, half_extents: Vector3, orientation: UnitQuat) -> Self {
        assert_finite_point(&center, "box center");
        assert!(
            finite3(&[half_extents.x, half_extents.y, half_extents.z])
                && half_extents.min() >= 0.0,
            "box half-extents must be finite and >= 0"
        );
        OrientedBox { center, half_extents, orientation }
    }

    /// Maps a world point into box-local coordinates.
    fn to_local(&self, p: &Point3) -> Vector3 {
        self.orientation.inverse_transform_vector(&(p - self.center))
    }

    pub fn transformed(&self, pose: &Pose) -> OrientedBox {
        OrientedBox {
            center: pose * self.center,
            half_extents: self.half_extents,
            orientation: pose.rotation * self.orientation,
        }
    }
}

/// Collision shape attached to a robot link or placed as a static obstacle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Capsule(Capsule),
    Box(OrientedBox),
}

impl Shape {
    pub fn transformed(&self, pose: &Pose) -> Shape {
        match self {
            Shape::Capsule(c) => Shape::Capsule(c.transformed(pose)),
            Shape::Box(b) => Shape::Box(b.transformed(pose)),
        }
    }
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Closest-point parameters between two segments (Ericson, Real-Time
/// Collision Detection, 5.1.9). Returns squared distance.
fn segment_segment_dist2(p1: &Point3, q1: &Point3, p2: &Point3, q2: &Point3) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    const EPS: f64 = 1e-300;

    let (s, t);
    if a <= EPS && e <= EPS {
        return r.dot(&r);
    }
    if a <= EPS {
        s = 0.0;
        t = clamp01(f / e);
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            t = 0.0;
            s = clamp01(-c / a);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s_ = if denom != 0.0 { clamp01((b * f - c * e) / denom) } else { 0.0 };
            let mut t_ = (b * s_ + f) / e;
            if t_ < 0.0 {
                t_ = 0.0;
                s_ = clamp01(-c / a);
            } else if t_ > 1.0 {
                t_ = 1.0;
                s_ = clamp01((b - c) / a);
            }
            s = s_;
            t = t_;
        }
    }
    let c1 = p1 + d1 * s;
    let c2 = p2 + d2 * t;
    (c1 - c2).norm_squared()
}

fn segment_key(s: &Segment) -> [f64; 6] {
    [s.start.x, s.start.y, s.start.z, s.end.x, s.end.y, s.end.z]
}

/// Minimum distance between two segments.
///
/// Symmetric in its arguments bit-for-bit: the pair is put in a canonical
/// order before the closest-point computation runs, so swapping the inputs
/// cannot change even the last ulp of the result.
pub fn segment_segment_distance(s1: &Segment, s2: &Segment) -> f64 {
    let (first, second) = if segment_key(s1) <= segment_key(s2) { (s1, s2) } else { (s2, s1) };
    segment_segment_dist2(&first.start, &first.end, &second.start, &second.end).sqrt()
}

/// Penetration depth of two capsules: zero when disjoint, otherwise how far
/// the combined radii exceed the axis separation.
pub fn capsule_penetration(c1: &Capsule, c2: &Capsule) -> f64 {
    let d = segment_segment_distance(&c1.axis(), &c2.axis());
    (c1.radius + c2.radius - d).max(0.0)
}

fn point_aabb_distance(p: &Vector3, half: &Vector3) -> f64 {
    let dx = (p.x.abs() - half.x).max(0.0);
    let dy = (p.y.abs() - half.y).max(0.0);
    let dz = (p.z.abs() - half.z).max(0.0);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Signed depth of a point inside an axis-aligned box: positive inside
/// (distance to the nearest face), negative outside (along the worst axis).
fn point_aabb_depth(p: &Vector3, half: &Vector3) -> f64 {
    (half.x - p.x.abs()).min(half.y - p.y.abs()).min(half.z - p.z.abs())
}

/// Ternary search for the minimum of a convex function on [lo, hi].
fn convex_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    for _ in 0..REFINE_ITERS {
        let third = (hi - lo) / 3.0;
        let m1 = lo + third;
        let m2 = hi - third;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let t = 0.5 * (lo + hi);
    (t, f(t))
}

/// Penetration depth of a capsule into an oriented box.
///
/// Distance from the axis to the box is convex along the axis parameter and
/// interior depth is concave, so a coarse scan (`BOX_AXIS_SAMPLES` points)
/// brackets the extremum and a ternary refinement pins it down to floating
/// point resolution. When the axis stays outside the box this reduces to
/// `max(0, radius - min_distance)`; once the axis enters the box the result
/// is `radius + deepest interior depth`.
pub fn box_capsule_penetration(b: &OrientedBox, c: &Capsule) -> f64 {
    let a = b.to_local(&c.a);
    let bb = b.to_local(&c.b);
    let half = b.half_extents;
    let lerp = |t: f64| a + (bb - a) * t;
    let dist = |t: f64| point_aabb_distance(&lerp(t), &half);

    // Coarse scan keeps the refinement honest even in flat regions.
    let n = BOX_AXIS_SAMPLES;
    let mut best_t = 0.0;
    let mut best_d = dist(0.0);
    for i in 1..=n {
        let t = i as f64 / n as f64;
        let d = dist(t);
        if d < best_d {
            best_d = d;
            best_t = t;
        }
    }
    let step = 1.0 / n as f64;
    let (_, dmin) = convex_min(dist, (best_t - step).max(0.0), (best_t + step).min(1.0));
    let dmin = dmin.min(best_d);

    if dmin > 0.0 {
        return (c.radius - dmin).max(0.0);
    }

    // Axis reaches the interior; maximize the concave depth instead.
    let depth = |t: f64| point_aabb_depth(&lerp(t), &half);
    let mut best_t = 0.0;
    let mut best_depth = depth(0.0);
    for i in 1..=n {
        let t = i as f64 / n as f64;
        let d = depth(t);
        if d > best_depth {
            best_depth = d;
            best_t = t;
        }
    }
    let (_, refined) = convex_min(|t| -depth(t), (best_t - step).max(0.0), (best_t + step).min(1.0));
    let deepest = best_depth.max(-refined).max(0.0);
    c.radius + deepest
}

/// Whether a sensing ray (modeled as a segment from the camera origin to the
/// sample point) passes through a capsule.
pub fn ray_hits_capsule(ray: &Segment, c: &Capsule) -> bool {
    segment_segment_distance(ray, &c.axis()) < c.radius
}

/// Whether a segment passes through an oriented box (slab test).
pub fn segment_hits_box(seg: &Segment, b: &OrientedBox) -> bool {
    let s = b.to_local(&seg.start);
    let e = b.to_local(&seg.end);
    let d = e - s;
    let half = b.half_extents;
    let mut tmin = 0.0_f64;
    let mut tmax = 1.0_f64;
    for i in 0..3 {
        if d[i].abs() < 1e-300 {
            if s[i].abs() > half[i] {
                return false;
            }
        } else {
            let inv = 1.0 / d[i];
            let mut t1 = (-half[i] - s[i]) * inv;
            let mut t2 = (half[i] - s[i]) * inv;
            if t1 > t2 {
                std::mem::swap(&mut t1, &mut t2);
            }
            tmin = tmin.max(t1);
            tmax = tmax.min(t2);
            if tmin > tmax {
                return false;
            }
        }
    }
    true
}

/// Whether a segment passes through any shape in a slice.
pub fn segment_hits_any(seg: &Segment, shapes: &[Shape]) -> bool {
    shapes.iter().any(|s| match s {
        Shape::Capsule(c) => ray_hits_capsule(seg, c),
        Shape::Box(b) => segment_hits_box(seg, b),
    })
}

/// Penetration depth between a robot shape and a (capsule-only) body part.
pub fn shape_capsule_penetration(shape: &Shape, c: &Capsule) -> f64 {
    match shape {
        Shape::Capsule(sc) => capsule_penetration(sc, c),
        Shape::Box(b) => box_capsule_penetration(b, c),
    }
}

/// Signed clearance between a robot shape and a capsule: positive separation
/// when disjoint, negative penetration depth when overlapping.
pub fn shape_capsule_clearance(shape: &Shape, c: &Capsule) -> f64 {
    match shape {
        Shape::Capsule(sc) => {
            segment_segment_distance(&sc.axis(), &c.axis()) - sc.radius - c.radius
        }
        Shape::Box(b) => {
            let pen = box_capsule_penetration(b, c);
            if pen > 0.0 {
                -pen
            } else {
                let a = b.to_local(&c.a);
                let bb = b.to_local(&c.b);
                let half = b.half_extents;
                let dist = |t: f64| point_aabb_distance(&(a + (bb - a) * t), &half);
                let n = BOX_AXIS_SAMPLES;
                let mut best_t = 0.0;
                let mut best_d = dist(0.0);
                for i in 1..=n {
                    let t = i as f64 / n as f64;
                    let d = dist(t);
                    if d < best_d {
                        best_d = d;
                        best_t = t;
                    }
                }
                let step = 1.0 / n as f64;
                let (_, dmin) =
                    convex_min(dist, (best_t - step).max(0.0), (best_t + step).min(1.0));
                dmin.min(best_d) - c.radius
            }
        }
    }
}

/// Penetration depth between two shapes. Box/box pairs are outside this
/// library's geometry budget and must be rejected at scene validation.
pub fn shape_penetration(a: &Shape, b: &Shape) -> f64 {
    match (a, b) {
        (Shape::Capsule(c1), Shape::Capsule(c2)) => capsule_penetration(c1, c2),
        (Shape::Box(bx), Shape::Capsule(c)) | (Shape::Capsule(c), Shape::Box(bx)) => {
            box_capsule_penetration(bx, c)
        }
        (Shape::Box(_), Shape::Box(_)) => {
            panic!("box/box penetration is unsupported; scene validation admits no such pair")
        }
    }
}
