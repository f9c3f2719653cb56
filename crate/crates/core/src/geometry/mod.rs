//! 2D geometric primitives shared by all planners: points, poses, convex
//! polygons, frame transforms, segment predicates, clearance queries and a
//! smooth differentiable signed distance between convex polygons.

use std::f64::consts::{PI, TAU};

use thiserror::Error;

mod smooth;

pub use smooth::{smooth_signed_distance, smooth_signed_distance_placed, PlacedGrad, SmoothDistance};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("coordinates must be finite")]
    NonFinite,
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon is not strictly convex and counter-clockwise")]
    NotConvex,
    #[error("polygon has repeated vertices")]
    RepeatedVertices,
}

/// Wrap an angle to (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// A point (or free vector) in the plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the cross product, treating both as vectors.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    /// Unit vector in the same direction; zero vector is returned unchanged.
    pub fn normalized(self) -> Point2 {
        let n = self.norm();
        if n > 0.0 {
            Point2::new(self.x / n, self.y / n)
        } else {
            self
        }
    }

    /// Rotate by 90 degrees counter-clockwise.
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn rotated(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl std::ops::Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Rigid pose in the plane: position plus heading in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub position: Point2,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            position: Point2::new(x, y),
            heading: normalize_angle(heading),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    /// Map a point from this pose's body frame into the parent frame.
    pub fn transform_point(&self, p: Point2) -> Point2 {
        self.position + p.rotated(self.heading)
    }

    /// Compose: `self` then `child`, both as frame-to-parent maps.
    pub fn compose(&self, child: &Pose2) -> Pose2 {
        Pose2 {
            position: self.transform_point(child.position),
            heading: normalize_angle(self.heading + child.heading),
        }
    }

    pub fn inverse(&self) -> Pose2 {
        let p = (-self.position).rotated(-self.heading);
        Pose2 {
            position: p,
            heading: normalize_angle(-self.heading),
        }
    }

    pub fn heading_vector(&self) -> Point2 {
        Point2::new(self.heading.cos(), self.heading.sin())
    }
}

/// Rigid transform between two coordinate frames.
///
/// Applying the transform maps coordinates expressed in the source frame
/// into the destination frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTransform {
    pub rotation: f64,
    pub translation: (f64, f64),
}

impl FrameTransform {
    pub fn identity() -> Self {
        Self {
            rotation: 0.0,
            translation: (0.0, 0.0),
        }
    }

    /// Transform whose application equals `pose.transform_point`.
    pub fn from_pose(pose: &Pose2) -> Self {
        Self {
            rotation: pose.heading,
            translation: (pose.position.x, pose.position.y),
        }
    }

    pub fn as_pose(&self) -> Pose2 {
        Pose2::new(self.translation.0, self.translation.1, self.rotation)
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        p.rotated(self.rotation) + Point2::new(self.translation.0, self.translation.1)
    }

    pub fn apply_pose(&self, pose: &Pose2) -> Pose2 {
        Pose2 {
            position: self.apply(pose.position),
            heading: normalize_angle(pose.heading + self.rotation),
        }
    }

    /// `self` applied after `other`.
    pub fn compose(&self, other: &FrameTransform) -> FrameTransform {
        let t = self.apply(Point2::new(other.translation.0, other.translation.1));
        FrameTransform {
            rotation: normalize_angle(self.rotation + other.rotation),
            translation: (t.x, t.y),
        }
    }

    pub fn inverse(&self) -> FrameTransform {
        let t = Point2::new(-self.translation.0, -self.translation.1).rotated(-self.rotation);
        FrameTransform {
            rotation: normalize_angle(-self.rotation),
            translation: (t.x, t.y),
        }
    }
}

/// Strictly convex polygon with counter-clockwise vertex order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let n = vertices.len();
        for i in 0..n {
            for j in (i + 1)..n {
                if vertices[i].distance(vertices[j]) < 1e-12 {
                    return Err(GeometryError::RepeatedVertices);
                }
            }
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b - a).cross(c - b) <= 0.0 {
                return Err(GeometryError::NotConvex);
            }
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle centered on the origin; `length` along x.
    pub fn rectangle(length: f64, width: f64) -> Self {
        let hl = length / 2.0;
        let hw = width / 2.0;
        Self {
            vertices: vec![
                Point2::new(-hl, -hw),
                Point2::new(hl, -hw),
                Point2::new(hl, hw),
                Point2::new(-hl, hw),
            ],
        }
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn centroid(&self) -> Point2 {
        let mut c = Point2::default();
        for v in &self.vertices {
            c = c + *v;
        }
        c * (1.0 / self.vertices.len() as f64)
    }

    /// Largest distance from the centroid to a vertex.
    pub fn bounding_radius(&self) -> f64 {
        let c = self.centroid();
        self.vertices
            .iter()
            .map(|v| v.distance(c))
            .fold(0.0, f64::max)
    }

    /// Vertices mapped through a rigid pose (body frame to parent frame).
    pub fn transformed(&self, pose: &Pose2) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self
                .vertices
                .iter()
                .map(|v| pose.transform_point(*v))
                .collect(),
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if (b - a).cross(p - a) < 0.0 {
                return false;
            }
        }
        true
    }

    /// Signed distance from a point: positive outside, negative inside.
    pub fn signed_distance(&self, p: Point2) -> f64 {
        let n = self.vertices.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            best = best.min(point_segment_distance(p, (a, b)));
        }
        if self.contains(p) {
            -best
        } else {
            best
        }
    }
}

/// Relative scale-aware orientation test: sign of the cross product of
/// (b - a) and (c - a), with values below `1e-12 * scale` treated as zero.
fn orientation(a: Point2, b: Point2, c: Point2) -> i8 {
    let ab = b - a;
    let ac = c - a;
    let cross = ab.cross(ac);
    let scale = ab.norm() * ac.norm();
    let eps = 1e-12 * scale.max(1e-300);
    if cross > eps {
        1
    } else if cross < -eps {
        -1
    } else {
        0
    }
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) - 1e-12
        && p.x <= a.x.max(b.x) + 1e-12
        && p.y >= a.y.min(b.y) - 1e-12
        && p.y <= a.y.max(b.y) + 1e-12
}

/// Whether two closed segments share at least one point. Touching at an
/// endpoint counts.
pub fn segment_intersects(seg_a: (Point2, Point2), seg_b: (Point2, Point2)) -> bool {
    let (p1, p2) = seg_a;
    let (p3, p4) = seg_b;
    let d1 = orientation(p3, p4, p1);
    let d2 = orientation(p3, p4, p2);
    let d3 = orientation(p1, p2, p3);
    let d4 = orientation(p1, p2, p4);

    if ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)) {
        return true;
    }
    (d1 == 0 && on_segment(p3, p4, p1))
        || (d2 == 0 && on_segment(p3, p4, p2))
        || (d3 == 0 && on_segment(p1, p2, p3))
        || (d4 == 0 && on_segment(p1, p2, p4))
}

pub fn point_segment_distance(p: Point2, seg: (Point2, Point2)) -> f64 {
    let (a, b) = seg;
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Minimum distance between two closed segments (zero when they intersect).
pub fn segment_segment_distance(seg_a: (Point2, Point2), seg_b: (Point2, Point2)) -> f64 {
    if segment_intersects(seg_a, seg_b) {
        return 0.0;
    }
    point_segment_distance(seg_a.0, seg_b)
        .min(point_segment_distance(seg_a.1, seg_b))
        .min(point_segment_distance(seg_b.0, seg_a))
        .min(point_segment_distance(seg_b.1, seg_a))
}

/// Minimum distance from `p` to any polygon boundary; negative penetration
/// depth when `p` lies inside a polygon. Empty input yields +infinity.
pub fn polygon_clearance(p: Point2, polys: &[ConvexPolygon]) -> f64 {
    polys
        .iter()
        .map(|poly| poly.signed_distance(p))
        .fold(f64::INFINITY, f64::min)
}

/// Maximum separation over the edge normals of both polygons. Negative or
/// zero means the polygons overlap (touching counts as overlap).
pub fn separation_gap(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    let mut gap = f64::NEG_INFINITY;
    for (first, second) in [(a, b), (b, a)] {
        let n = first.vertices().len();
        for i in 0..n {
            let va = first.vertices()[i];
            let vb = first.vertices()[(i + 1) % n];
            let axis = (vb - va).perp().normalized();
            let max_first = first
                .vertices()
                .iter()
                .map(|v| v.dot(axis))
                .fold(f64::NEG_INFINITY, f64::max);
            let min_second = second
                .vertices()
                .iter()
                .map(|v| v.dot(axis))
                .fold(f64::INFINITY, f64::min);
            gap = gap.max(min_second - max_first);
        }
    }
    gap
}

/// Exact convex polygon overlap test; touching contact counts as overlap.
pub fn polygons_overlap(a: &ConvexPolygon, b: &ConvexPolygon) -> bool {
    separation_gap(a, b) <= 0.0
}
