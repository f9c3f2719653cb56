//! Trajectory refinement: piecewise-quintic flat output minimizing squared
//! jerk plus total time under cubic soft penalties, solved by quasi-Newton
//! descent, and conversion of the flat output into differential-drive
//! commands.

use thiserror::Error;

use crate::geometry::{Point2, Pose2};

mod cost;
mod lbfgs;
mod poly;

pub use cost::{CostBreakdown, Problem};
pub use lbfgs::OptimizeReport;
pub use poly::{eval_quintic, jerk_integral, quintic_coeffs};

#[derive(Debug, Error)]
pub enum TrajoptError {
    #[error("cost is not finite at the initial trajectory")]
    NonFiniteInit,
}

/// Position, velocity and acceleration at a segment joint.
#[derive(Debug, Clone, Copy, Default)]
pub struct KnotState {
    pub pos: Point2,
    pub vel: Point2,
    pub acc: Point2,
}

/// Flat-output state at one evaluation instant.
#[derive(Debug, Clone, Copy)]
pub struct FlatState {
    pub pos: Point2,
    pub vel: Point2,
    pub acc: Point2,
    pub jerk: Point2,
}

/// C2-continuous piecewise quintic trajectory. Continuity holds by
/// construction: each segment interpolates the shared knot states exactly.
#[derive(Debug, Clone)]
pub struct PiecewiseTrajectory {
    knots: Vec<KnotState>,
    durations: Vec<f64>,
    coeffs: Vec<[[f64; 6]; 2]>,
}

impl PiecewiseTrajectory {
    pub fn new(knots: Vec<KnotState>, durations: Vec<f64>) -> Self {
        assert!(knots.len() >= 2);
        assert_eq!(knots.len(), durations.len() + 1);
        assert!(durations.iter().all(|&t| t > 0.0), "durations must be positive");
        let coeffs = knots
            .windows(2)
            .zip(durations.iter())
            .map(|(pair, &t)| {
                let (a, b) = (pair[0], pair[1]);
                [
                    poly::quintic_coeffs(a.pos.x, a.vel.x, a.acc.x, b.pos.x, b.vel.x, b.acc.x, t),
                    poly::quintic_coeffs(a.pos.y, a.vel.y, a.acc.y, b.pos.y, b.vel.y, b.acc.y, t),
                ]
            })
            .collect();
        Self {
            knots,
            durations,
            coeffs,
        }
    }

    pub fn knots(&self) -> &[KnotState] {
        &self.knots
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn segment_count(&self) -> usize {
        self.durations.len()
    }

    pub fn total_duration(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// Evaluate at `t`, clamped to [0, T]; the flag reports clamping.
    pub fn evaluate_clamped(&self, t: f64) -> (FlatState, bool) {
        let total = self.total_duration();
        let clamped = t < 0.0 || t > total;
        let t = t.clamp(0.0, total);
        let mut remaining = t;
        let mut seg = 0;
        while seg + 1 < self.durations.len() && remaining > self.durations[seg] {
            remaining -= self.durations[seg];
            seg += 1;
        }
        let tau = remaining.min(self.durations[seg]);
        let (px, vx, ax, jx) = poly::eval_quintic(&self.coeffs[seg][0], tau);
        let (py, vy, ay, jy) = poly::eval_quintic(&self.coeffs[seg][1], tau);
        (
            FlatState {
                pos: Point2::new(px, py),
                vel: Point2::new(vx, vy),
                acc: Point2::new(ax, ay),
                jerk: Point2::new(jx, jy),
            },
            clamped,
        )
    }

    pub fn evaluate(&self, t: f64) -> FlatState {
        self.evaluate_clamped(t).0
    }

    /// Largest position/velocity/acceleration mismatch across joints when
    /// evaluating both adjacent segments at the joint.
    pub fn continuity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, &t) in self.durations.iter().enumerate() {
            let (px, vx, ax, _) = poly::eval_quintic(&self.coeffs[i][0], t);
            let (py, vy, ay, _) = poly::eval_quintic(&self.coeffs[i][1], t);
            let k = self.knots[i + 1];
            for d in [
                px - k.pos.x,
                py - k.pos.y,
                vx - k.vel.x,
                vy - k.vel.y,
                ax - k.acc.x,
                ay - k.acc.y,
            ] {
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    pub(crate) fn coeffs(&self) -> &[[[f64; 6]; 2]] {
        &self.coeffs
    }
}

/// Optimizer weights and limits.
#[derive(Debug, Clone, Copy)]
pub struct OptParams {
    pub w_time: f64,
    pub w_static: f64,
    pub w_vel: f64,
    pub w_omega: f64,
    pub w_robot: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub sample_dt: f64,
    /// Clearance demanded from static obstacles beyond the disc radius.
    pub static_margin: f64,
    /// Two-disc footprint cover: radius and center offset along the body
    /// axis.
    pub disc_radius: f64,
    pub disc_offset: f64,
    /// Demanded smoothed signed distance between robot polygons.
    pub d_min: f64,
    /// Regularizer for velocity-direction and angular-rate quotients.
    pub eps_v_sq: f64,
    /// Smoothing temperature of the inter-robot signed distance.
    pub mu: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for OptParams {
    fn default() -> Self {
        Self {
            w_time: 10.0,
            w_static: 1e4,
            w_vel: 1e3,
            w_omega: 1e3,
            w_robot: 1e4,
            v_max: 2.0,
            omega_max: std::f64::consts::FRAC_PI_2,
            sample_dt: 0.05,
            static_margin: 0.1,
            disc_radius: 0.28,
            disc_offset: 0.2,
            d_min: 0.2,
            eps_v_sq: 1e-4,
            mu: 0.01,
            tol: 1e-5,
            max_iters: 100,
        }
    }
}

fn merge_path_legs(path: &[Point2], min_leg: f64) -> Vec<Point2> {
    let mut points = vec![path[0]];
    let mut acc = 0.0;
    for w in path.windows(2) {
        acc += w[0].distance(w[1]);
        if acc >= min_leg {
            points.push(w[1]);
            acc = 0.0;
        }
    }
    let last = *path.last().unwrap();
    if points.last().unwrap().distance(last) > 1e-9 {
        if acc < min_leg / 2.0 && points.len() > 1 {
            *points.last_mut().unwrap() = last;
        } else {
            points.push(last);
        }
    }
    points
}

fn knots_from_waypoints(
    waypoints: &[Point2],
    durations: &[f64],
    start_vel: Point2,
) -> Vec<KnotState> {
    let n = waypoints.len();
    let mut knots = vec![KnotState::default(); n];
    for (i, k) in knots.iter_mut().enumerate() {
        k.pos = waypoints[i];
    }
    knots[0].vel = start_vel;
    for i in 1..n - 1 {
        let prev_leg = waypoints[i].distance(waypoints[i - 1]);
        let next_leg = waypoints[i + 1].distance(waypoints[i]);
        if prev_leg < 1e-6 || next_leg < 1e-6 {
            continue; // dwell knot keeps zero velocity
        }
        let span = durations[i - 1] + durations[i];
        knots[i].vel = (waypoints[i + 1] - waypoints[i - 1]) * (1.0 / span);
    }
    knots
}

/// Initial trajectory over a path: one segment per merged leg, durations
/// sized for half the velocity limit, boundary velocity from the robot's
/// current motion, zero terminal velocity and acceleration.
pub fn initialize_trajectory(path: &[Point2], v_max: f64, start_vel: Point2) -> PiecewiseTrajectory {
    assert!(path.len() >= 2);
    let waypoints = merge_path_legs(path, 0.5);
    let durations: Vec<f64> = waypoints
        .windows(2)
        .map(|w| (w[0].distance(w[1]) / (0.5 * v_max)).max(0.1))
        .collect();
    let knots = knots_from_waypoints(&waypoints, &durations, start_vel);
    PiecewiseTrajectory::new(knots, durations)
}

/// Initial trajectory shaped by a station-time speed profile: knots are
/// placed along the path at the profile's positions every `knot_period`
/// seconds, so waiting phases survive as long-duration short legs.
pub fn initialize_with_profile(
    path: &[Point2],
    profile: &crate::local_planner::SpeedProfile,
    start_vel: Point2,
    knot_period: f64,
) -> PiecewiseTrajectory {
    let stations = crate::local_planner::resample_path(path, profile.delta_s);
    let arc_at = |s: f64| -> Point2 {
        let idx = (s / profile.delta_s).max(0.0);
        let i = (idx.floor() as usize).min(stations.len() - 1);
        let frac = (idx - i as f64).clamp(0.0, 1.0);
        if i + 1 < stations.len() {
            stations[i].position + (stations[i + 1].position - stations[i].position) * frac
        } else {
            stations[i].position
        }
    };
    let total_time = profile.arrival_time().max(profile.dt);
    let steps = (total_time / knot_period).ceil() as usize;
    let mut waypoints = Vec::with_capacity(steps + 1);
    let mut durations = Vec::with_capacity(steps);
    let mut prev_t = 0.0;
    waypoints.push(arc_at(profile.arc_length_at(0.0)));
    for k in 1..=steps {
        let t = (k as f64 * knot_period).min(total_time);
        if t - prev_t < 1e-9 {
            break;
        }
        waypoints.push(arc_at(profile.arc_length_at(t)));
        durations.push(t - prev_t);
        prev_t = t;
    }
    if waypoints.len() < 2 {
        waypoints.push(*waypoints.last().unwrap());
        durations.push(knot_period);
    }
    let knots = knots_from_waypoints(&waypoints, &durations, start_vel);
    PiecewiseTrajectory::new(knots, durations)
}

/// Division guard for command extraction; far below `eps_v_sq` (which
/// shapes the optimizer's gradients) so commanded rates track the flat
/// output closely while still staying finite at standstill.
const CMD_EPS_SQ: f64 = 1e-9;

/// Differential-drive command extracted from the flat output. Both values
/// are clamped to the platform limits; the flag reports time clamping.
pub fn flat_to_command(
    traj: &PiecewiseTrajectory,
    t: f64,
    params: &OptParams,
) -> (f64, f64, bool) {
    let (state, clamped) = traj.evaluate_clamped(t);
    let v = state.vel.norm();
    let den = state.vel.norm_sq() + CMD_EPS_SQ;
    let omega = state.vel.cross(state.acc) / den;
    (
        v.clamp(0.0, params.v_max),
        omega.clamp(-params.omega_max, params.omega_max),
        clamped,
    )
}

/// Heading of the flat output's tangent at `t`, if the velocity is large
/// enough to define one.
pub fn tangent_heading(traj: &PiecewiseTrajectory, t: f64, min_speed: f64) -> Option<f64> {
    let state = traj.evaluate(t);
    if state.vel.norm() < min_speed {
        None
    } else {
        Some(state.vel.y.atan2(state.vel.x))
    }
}

/// A stationary trajectory holding `pose` for `duration` seconds.
pub fn hold_trajectory(pose: &Pose2, duration: f64) -> PiecewiseTrajectory {
    let knot = KnotState {
        pos: pose.position,
        vel: Point2::default(),
        acc: Point2::default(),
    };
    PiecewiseTrajectory::new(vec![knot, knot], vec![duration.max(0.1)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_two_point_path_single_segment() {
        let path = vec![Point2::new(0.0, 0.0), Point2::new(4.0, 0.0)];
        let traj = initialize_trajectory(&path, 2.0, Point2::default());
        assert_eq!(traj.segment_count(), 1);
        assert!((traj.total_duration() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn collinear_midpoint_is_c2() {
        let path = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(2.0, 0.0),
        ];
        let traj = initialize_trajectory(&path, 2.0, Point2::default());
        assert!(traj.continuity_error() < 1e-9);
        // passes through the middle knot
        let t_mid = traj.durations()[0];
        let s = traj.evaluate(t_mid);
        assert!((s.pos.x - 1.0).abs() < 1e-9);
    }

    #[test]
    fn l_shaped_path_reproduces_knots() {
        let path = vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 2.0),
        ];
        let traj = initialize_trajectory(&path, 2.0, Point2::default());
        let mut t = 0.0;
        for (i, knot) in traj.knots().iter().enumerate() {
            let s = traj.evaluate(t);
            assert!(
                s.pos.distance(knot.pos) < 1e-9,
                "knot {i} at t={t}: {:?} vs {:?}",
                s.pos,
                knot.pos
            );
            if i < traj.segment_count() {
                t += traj.durations()[i];
            }
        }
    }

    #[test]
    fn straight_constant_speed_has_zero_omega() {
        let knots = vec![
            KnotState {
                pos: Point2::new(0.0, 0.0),
                vel: Point2::new(1.0, 0.0),
                acc: Point2::default(),
            },
            KnotState {
                pos: Point2::new(3.0, 0.0),
                vel: Point2::new(1.0, 0.0),
                acc: Point2::default(),
            },
        ];
        let traj = PiecewiseTrajectory::new(knots, vec![3.0]);
        let params = OptParams::default();
        let (v, omega, _) = flat_to_command(&traj, 1.5, &params);
        assert!((v - 1.0).abs() < 1e-9);
        assert_eq!(omega, 0.0);
    }

    #[test]
    fn circular_arc_omega_matches_curvature() {
        // Boundary states taken from a radius-2 circle traversed at 1 m/s;
        // at t = 0 the quintic's derivatives equal the circle's exactly.
        let r: f64 = 2.0;
        let v = 1.0;
        let w = v / r;
        let at = |t: f64| {
            let ang = w * t;
            KnotState {
                pos: Point2::new(r * ang.sin(), r * (1.0 - ang.cos())),
                vel: Point2::new(v * ang.cos(), v * ang.sin()),
                acc: Point2::new(-v * w * ang.sin(), v * w * ang.cos()),
            }
        };
        let traj = PiecewiseTrajectory::new(vec![at(0.0), at(1.0)], vec![1.0]);
        let params = OptParams::default();
        let (speed, omega, _) = flat_to_command(&traj, 0.0, &params);
        assert!((speed - 1.0).abs() < 1e-9);
        assert!((omega - 0.5).abs() < 1e-6, "omega {omega}");
    }

    #[test]
    fn near_standstill_omega_stays_bounded() {
        let knots = vec![
            KnotState {
                pos: Point2::new(0.0, 0.0),
                vel: Point2::new(1e-9, 0.0),
                acc: Point2::new(0.0, 1.0),
                },
            KnotState {
                pos: Point2::new(0.001, 0.0),
                vel: Point2::default(),
                acc: Point2::default(),
            },
        ];
        let traj = PiecewiseTrajectory::new(knots, vec![1.0]);
        let params = OptParams::default();
        let (_, omega, _) = flat_to_command(&traj, 0.0, &params);
        assert!(omega.is_finite());
        assert!(omega.abs() <= params.omega_max);
    }

    #[test]
    fn out_of_range_time_clamps_with_flag() {
        let path = vec![Point2::new(0.0, 0.0), Point2::new(2.0, 0.0)];
        let traj = initialize_trajectory(&path, 2.0, Point2::default());
        let (_, _, clamped) = flat_to_command(&traj, traj.total_duration() + 1.0, &OptParams::default());
        assert!(clamped);
        let (state, _) = traj.evaluate_clamped(traj.total_duration() + 1.0);
        assert!((state.pos.x - 2.0).abs() < 1e-9);
    }

    #[test]
    fn profile_initializer_keeps_waiting_phase() {
        use crate::local_planner::SpeedProfile;
        // Wait 1 s at the start, then advance 2 stations per step.
        let mut s_indices = vec![0usize; 11];
        for (j, s) in s_indices.iter_mut().enumerate().skip(10) {
            *s = (j - 10) * 2;
        }
        // extend until station 20 (2 m at 0.1 m stations)
        let mut s_indices = s_indices;
        while *s_indices.last().unwrap() < 20 {
            let last = *s_indices.last().unwrap();
            s_indices.push((last + 2).min(20));
        }
        let profile = SpeedProfile {
            s_indices,
            delta_s: 0.1,
            dt: 0.1,
        };
        let path = vec![Point2::new(0.0, 0.0), Point2::new(2.0, 0.0)];
        let traj = initialize_with_profile(&path, &profile, Point2::default(), 0.5);
        // Still near the origin after the waiting phase.
        let early = traj.evaluate(0.5);
        assert!(early.pos.x < 0.3, "moved too early: {:?}", early.pos);
        let end = traj.evaluate(traj.total_duration());
        assert!((end.pos.x - 2.0).abs() < 1e-6);
    }
}
