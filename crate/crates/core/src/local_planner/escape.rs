//! Escape point sampling and scoring: temporary local objectives that pull
//! a robot out of a spatio-temporal deadlock.

use crate::geometry::{normalize_angle, Point2, Pose2};

use super::grid::LocalGrid;
use super::LocalPlannerParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy)]
pub struct EscapeCandidate {
    pub point: Point2,
    pub sector: Sector,
    pub clearance: f64,
    /// Heading change required to face the candidate, in [0, pi].
    pub heading_change: f64,
    /// Filled by scoring.
    pub cost: f64,
}

/// Polar samples in forward and backward sectors relative to the robot's
/// heading. Candidates without `inradius + margin` of clearance are
/// discarded; an empty result means hold position.
pub fn sample_escape_points(
    pose: &Pose2,
    grid: &LocalGrid,
    params: &LocalPlannerParams,
) -> Vec<EscapeCandidate> {
    let mut bearings = vec![0.0];
    let step = params.escape_bearing_step_deg.to_radians();
    let max = params.escape_bearing_max_deg.to_radians() + 1e-9;
    let mut b = step;
    while b <= max {
        bearings.push(b);
        bearings.push(-b);
        b += step;
    }
    let min_clearance = params.robot_inradius + params.escape_margin;
    let mut out = Vec::new();
    for (sector, base) in [
        (Sector::Forward, pose.heading),
        (Sector::Backward, pose.heading + std::f64::consts::PI),
    ] {
        for &radius in &params.escape_radii {
            for &bearing in &bearings {
                let angle = base + bearing;
                let point = pose.position + Point2::new(angle.cos(), angle.sin()) * radius;
                let clearance = grid.clearance_at(point);
                if clearance < min_clearance || grid.is_occupied(grid.cell_of(point)) {
                    continue;
                }
                let to_point = point - pose.position;
                let heading_change =
                    normalize_angle(to_point.y.atan2(to_point.x) - pose.heading).abs();
                out.push(EscapeCandidate {
                    point,
                    sector,
                    clearance,
                    heading_change,
                    cost: f64::NAN,
                });
            }
        }
    }
    out
}

/// Cost balancing progress toward the local goal, safety and the heading
/// change needed to commit to the candidate. Lower is better.
pub fn score_escape_point(
    candidate: &EscapeCandidate,
    local_goal: Point2,
    params: &LocalPlannerParams,
) -> f64 {
    let goal_term = params.w_goal * candidate.point.distance(local_goal);
    let safety_term = params.w_safety * (params.d_safe - candidate.clearance).max(0.0);
    let heading_term = params.w_heading * candidate.heading_change;
    goal_term + safety_term + heading_term
}

/// Score and order candidates: ascending cost, ties by smaller heading
/// change, then lexicographic point order.
pub fn rank_candidates(
    mut candidates: Vec<EscapeCandidate>,
    local_goal: Point2,
    params: &LocalPlannerParams,
) -> Vec<EscapeCandidate> {
    for c in &mut candidates {
        c.cost = score_escape_point(c, local_goal, params);
    }
    candidates.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then(a.heading_change.total_cmp(&b.heading_change))
            .then(a.point.x.total_cmp(&b.point.x))
            .then(a.point.y.total_cmp(&b.point.y))
    });
    candidates
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local_planner::LocalPlannerParams;

    fn open_grid() -> LocalGrid {
        LocalGrid::from_occupancy(0.1, (-50, -50), 100, 100, vec![false; 100 * 100])
    }

    #[test]
    fn open_space_yields_66_candidates() {
        let params = LocalPlannerParams::default();
        let c = sample_escape_points(&Pose2::identity(), &open_grid(), &params);
        assert_eq!(c.len(), 66); // 2 sectors x 11 bearings x 3 radii
    }

    #[test]
    fn dead_end_keeps_only_backward_candidates() {
        // Dead-end corridor 1.2 m wide with solid walls, capped just ahead
        // of the robot; only the narrow backward escape survives.
        let mut occ = vec![false; 200 * 200];
        for ly in 0..200usize {
            for lx in 0..200usize {
                let cx = (lx as f64 - 100.0 + 0.5) * 0.1;
                let cy = (ly as f64 - 100.0 + 0.5) * 0.1;
                if cy.abs() >= 0.6 || cx >= 0.5 {
                    occ[ly * 200 + lx] = true;
                }
            }
        }
        let grid = LocalGrid::from_occupancy(0.1, (-100, -100), 200, 200, occ);
        let params = LocalPlannerParams::default();
        let candidates = sample_escape_points(&Pose2::identity(), &grid, &params);
        assert!(!candidates.is_empty());
        assert!(candidates.iter().all(|c| c.sector == Sector::Backward));
    }

    #[test]
    fn fully_enclosed_yields_nothing() {
        let mut occ = vec![false; 100 * 100];
        for x in 0..100i64 {
            for y in 0..100i64 {
                let d = ((x - 50) * (x - 50) + (y - 50) * (y - 50)) as f64;
                if d.sqrt() >= 6.0 {
                    occ[y as usize * 100 + x as usize] = true;
                }
            }
        }
        let grid = LocalGrid::from_occupancy(0.1, (-50, -50), 100, 100, occ);
        let params = LocalPlannerParams::default();
        let candidates = sample_escape_points(&Pose2::new(0.05, 0.05, 0.0), &grid, &params);
        assert!(candidates.is_empty());
    }

    #[test]
    fn larger_clearance_scores_lower() {
        let params = LocalPlannerParams::default();
        let goal = Point2::new(5.0, 0.0);
        let near_wall = EscapeCandidate {
            point: Point2::new(3.0, 0.0),
            sector: Sector::Forward,
            clearance: 0.4,
            heading_change: 0.0,
            cost: f64::NAN,
        };
        let roomy = EscapeCandidate {
            clearance: 0.9,
            ..near_wall
        };
        assert!(
            score_escape_point(&roomy, goal, &params)
                < score_escape_point(&near_wall, goal, &params)
        );
    }

    #[test]
    fn candidate_at_goal_with_room_costs_heading_only() {
        let params = LocalPlannerParams::default();
        let goal = Point2::new(2.0, 2.0);
        let c = EscapeCandidate {
            point: goal,
            sector: Sector::Forward,
            clearance: params.d_safe + 0.5,
            heading_change: 0.7,
            cost: f64::NAN,
        };
        let cost = score_escape_point(&c, goal, &params);
        assert!((cost - params.w_heading * 0.7).abs() < 1e-12);
    }

    #[test]
    fn fixture_argmin_matches_direct_evaluation() {
        let mut params = LocalPlannerParams::default();
        params.w_goal = 1.0;
        params.w_safety = 2.0;
        params.w_heading = 0.5;
        params.d_safe = 1.0;
        let goal = Point2::new(4.0, 1.0);
        let mk = |x: f64, y: f64, clearance: f64, heading_change: f64| EscapeCandidate {
            point: Point2::new(x, y),
            sector: Sector::Forward,
            clearance,
            heading_change,
            cost: f64::NAN,
        };
        let candidates = vec![
            mk(1.0, 0.0, 0.5, 0.1),
            mk(2.0, 0.5, 1.2, 0.4),
            mk(3.0, 1.0, 0.8, 0.9),
            mk(1.5, -0.5, 2.0, 1.2),
            mk(3.5, 0.8, 0.3, 0.2),
        ];
        let expected_costs: Vec<f64> = candidates
            .iter()
            .map(|c| {
                1.0 * c.point.distance(goal)
                    + 2.0 * (1.0 - c.clearance).max(0.0)
                    + 0.5 * c.heading_change
            })
            .collect();
        let expected_best = expected_costs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let ranked = rank_candidates(candidates.clone(), goal, &params);
        assert!(ranked[0].point.distance(candidates[expected_best].point) < 1e-12);
    }

    #[test]
    fn argmin_invariant_under_uniform_weight_scaling() {
        let params = LocalPlannerParams::default();
        let mut scaled = params;
        scaled.w_goal *= 7.5;
        scaled.w_safety *= 7.5;
        scaled.w_heading *= 7.5;
        let goal = Point2::new(3.0, -1.0);
        let candidates = sample_escape_points(&Pose2::new(0.0, 0.0, 0.4), &open_grid(), &params);
        let a = rank_candidates(candidates.clone(), goal, &params);
        let b = rank_candidates(candidates, goal, &scaled);
        assert!(a[0].point.distance(b[0].point) < 1e-12);
    }
}
