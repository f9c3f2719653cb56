//! Ground-truth environment: workspace geometry, simulated 360-degree range
//! sensing and differential-drive integration. Planners never read this
//! module directly; they only see scans and messages.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::{
    normalize_angle, polygons_overlap, ConvexPolygon, Point2, Pose2,
};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("pose ({0:.2}, {1:.2}) lies inside an obstacle")]
    PoseInsideObstacle(f64, f64),
}

/// Static environment: rectangular extent plus convex obstacle pieces.
/// Non-convex shapes are authored as unions of convex pieces.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub extent: (f64, f64),
    pub obstacles: Vec<ConvexPolygon>,
}

impl Workspace {
    pub fn new(extent: (f64, f64), obstacles: Vec<ConvexPolygon>) -> Self {
        assert!(extent.0 > 0.0 && extent.1 > 0.0);
        Self { extent, obstacles }
    }

    pub fn contains_point(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.extent.0 && p.y <= self.extent.1
    }

    pub fn point_in_obstacle(&self, p: Point2) -> bool {
        self.obstacles.iter().any(|o| o.contains(p))
    }
}

/// Kinematic state of one robot: pose plus commanded body velocities.
#[derive(Debug, Clone, Copy)]
pub struct RobotState {
    pub pose: Pose2,
    pub linear_velocity: f64,
    pub angular_velocity: f64,
}

impl RobotState {
    pub fn at_rest(pose: Pose2) -> Self {
        Self {
            pose,
            linear_velocity: 0.0,
            angular_velocity: 0.0,
        }
    }
}

/// One polar range scan. Bearings are measured from the robot's heading and
/// strictly increase over [0, 2*pi); `origin_pose` is the sensor pose
/// expressed in the robot's private frame.
#[derive(Debug, Clone)]
pub struct LidarScan {
    pub origin_pose: Pose2,
    pub ranges: Vec<(f64, f64)>,
    pub max_range: f64,
}

impl LidarScan {
    /// Metric endpoint of beam `i` in the private frame, or None when the
    /// beam saw nothing within range.
    pub fn hit_point(&self, i: usize) -> Option<Point2> {
        let (bearing, range) = self.ranges[i];
        if range >= self.max_range {
            return None;
        }
        let angle = self.origin_pose.heading + bearing;
        Some(self.origin_pose.position + Point2::new(angle.cos(), angle.sin()) * range)
    }
}

fn ray_segment_distance(origin: Point2, dir: Point2, seg: (Point2, Point2)) -> Option<f64> {
    let (a, b) = seg;
    let ab = b - a;
    let denom = dir.cross(ab);
    if denom.abs() < 1e-15 {
        return None;
    }
    let ao = a - origin;
    let t = ao.cross(ab) / denom; // distance along ray
    let u = ao.cross(dir) / denom; // position along segment
    if t >= 0.0 && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Distance from `origin` along `dir` (unit) to the nearest polygon edge.
pub fn ray_cast(origin: Point2, dir: Point2, polygons: &[ConvexPolygon]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for poly in polygons {
        let n = poly.vertices().len();
        for i in 0..n {
            let seg = (poly.vertices()[i], poly.vertices()[(i + 1) % n]);
            if let Some(t) = ray_segment_distance(origin, dir, seg) {
                best = Some(best.map_or(t, |b: f64| b.min(t)));
            }
        }
    }
    best
}

/// Simulate a 360-degree range scan from `true_pose` (world frame).
///
/// `extra_bodies` are additional ray-casting obstacles (teammate
/// footprints). The returned scan carries `frame_pose` as its origin, i.e.
/// the same pose expressed in the robot's private frame; ranges get
/// zero-mean Gaussian noise of `noise_sigma` and are clamped to
/// [0, max_range]. Beams that hit nothing report exactly `max_range`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_lidar<R: Rng>(
    workspace: &Workspace,
    true_pose: &Pose2,
    frame_pose: Pose2,
    extra_bodies: &[ConvexPolygon],
    beam_count: usize,
    max_range: f64,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<LidarScan, WorldError> {
    assert!(beam_count >= 8);
    assert!(max_range > 0.0);
    if workspace.point_in_obstacle(true_pose.position) {
        return Err(WorldError::PoseInsideObstacle(
            true_pose.position.x,
            true_pose.position.y,
        ));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut ranges = Vec::with_capacity(beam_count);
    for k in 0..beam_count {
        let bearing = std::f64::consts::TAU * k as f64 / beam_count as f64;
        let angle = true_pose.heading + bearing;
        let dir = Point2::new(angle.cos(), angle.sin());
        let static_hit = ray_cast(true_pose.position, dir, &workspace.obstacles);
        let body_hit = ray_cast(true_pose.position, dir, extra_bodies);
        let hit = match (static_hit, body_hit) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let mut range = hit.unwrap_or(max_range).min(max_range);
        if range < max_range && noise_sigma > 0.0 {
            range += noise_sigma * normal.sample(rng);
        }
        ranges.push((bearing, range.clamp(0.0, max_range)));
    }
    Ok(LidarScan {
        origin_pose: frame_pose,
        ranges,
        max_range,
    })
}

/// Result of clamping a command against the platform limits.
#[derive(Debug, Clone, Copy)]
pub struct IntegrationStep {
    pub state: RobotState,
    pub clamped: bool,
}

/// Unicycle update with command clamping to the platform limits.
pub fn integrate_dynamics(
    state: &RobotState,
    command: (f64, f64),
    dt: f64,
    v_max: f64,
    omega_max: f64,
) -> IntegrationStep {
    assert!(dt > 0.0);
    let v = command.0.clamp(-v_max, v_max);
    let omega = command.1.clamp(-omega_max, omega_max);
    let clamped = v != command.0 || omega != command.1;
    let pose = state.pose;
    let next = Pose2::new(
        pose.position.x + v * pose.heading.cos() * dt,
        pose.position.y + v * pose.heading.sin() * dt,
        normalize_angle(pose.heading + omega * dt),
    );
    IntegrationStep {
        state: RobotState {
            pose: next,
            linear_velocity: v,
            angular_velocity: omega,
        },
        clamped,
    }
}

/// A detected exact polygon overlap between a robot and either an obstacle
/// or another robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionEvent {
    RobotObstacle { robot: usize, obstacle: usize },
    RobotRobot { a: usize, b: usize },
}

/// Exact overlap report over all footprints; touching contact counts.
pub fn check_collisions(workspace: &Workspace, footprints: &[ConvexPolygon]) -> Vec<CollisionEvent> {
    let mut events = Vec::new();
    for (r, fp) in footprints.iter().enumerate() {
        for (o, obs) in workspace.obstacles.iter().enumerate() {
            if polygons_overlap(fp, obs) {
                events.push(CollisionEvent::RobotObstacle { robot: r, obstacle: o });
            }
        }
    }
    for a in 0..footprints.len() {
        for b in (a + 1)..footprints.len() {
            if polygons_overlap(&footprints[a], &footprints[b]) {
                events.push(CollisionEvent::RobotRobot { a, b });
            }
        }
    }
    events
}
