//! Tactical layer: local goal selection on the strategic route, grid
//! search, station-time conflict checks against teammate predictions, and
//! escape-point deadlock resolution.

use crate::geometry::{ConvexPolygon, Point2, Pose2};

mod escape;
mod grid;
mod st;

pub use escape::{rank_candidates, sample_escape_points, score_escape_point, EscapeCandidate, Sector};
pub use grid::{astar_plan, GridPath, LocalGrid, PlanError};
pub use st::{
    build_st_graph, find_speed_profile, resample_path, ProfileError, STGraph, SpeedProfile,
    TeammatePrediction,
};

#[derive(Debug, Clone, Copy)]
pub struct LocalPlannerParams {
    pub lookahead: f64,
    pub delta_s: f64,
    pub dt: f64,
    pub horizon: f64,
    pub d_safe: f64,
    pub w_goal: f64,
    pub w_safety: f64,
    pub w_heading: f64,
    pub robot_inradius: f64,
    pub escape_margin: f64,
    pub safety_radius: f64,
    pub escape_radii: [f64; 3],
    pub escape_bearing_step_deg: f64,
    pub escape_bearing_max_deg: f64,
    /// Keep the current escape target unless a candidate is at least this
    /// fraction of its cost (re-evaluated every cycle).
    pub escape_hysteresis: f64,
}

impl Default for LocalPlannerParams {
    fn default() -> Self {
        Self {
            lookahead: 4.0,
            delta_s: 0.1,
            dt: 0.1,
            horizon: 5.0,
            d_safe: 1.0,
            w_goal: 1.0,
            w_safety: 2.0,
            w_heading: 0.5,
            robot_inradius: 0.25,
            escape_margin: 0.1,
            safety_radius: 0.35,
            escape_radii: [1.0, 1.5, 2.0],
            escape_bearing_step_deg: 15.0,
            escape_bearing_max_deg: 75.0,
            escape_hysteresis: 0.9,
        }
    }
}

/// The point at arc length `lookahead` along the route, measured from the
/// route point closest to the robot; the route end when shorter.
pub fn select_local_goal(route: &[Point2], pose: &Pose2, lookahead: f64) -> Point2 {
    assert!(!route.is_empty());
    if route.len() == 1 {
        return route[0];
    }
    // Closest point on the route polyline to the robot.
    let mut best = (f64::INFINITY, 0usize, route[0]);
    for (i, w) in route.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let ab = b - a;
        let len_sq = ab.norm_sq();
        let t = if len_sq > 0.0 {
            ((pose.position - a).dot(ab) / len_sq).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let proj = a + ab * t;
        let d = pose.position.distance(proj);
        if d < best.0 {
            best = (d, i, proj);
        }
    }
    let (_, seg, proj) = best;
    let mut remaining = lookahead;
    let mut cursor = proj;
    for i in seg..route.len() - 1 {
        let target = route[i + 1];
        let len = cursor.distance(target);
        if len >= remaining {
            if len < 1e-12 {
                return target;
            }
            return cursor + (target - cursor) * (remaining / len);
        }
        remaining -= len;
        cursor = target;
    }
    *route.last().unwrap()
}

/// Planner execution mode, also exported in trajectory logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    Normal,
    Escape,
    Hold,
}

impl PlanMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlanMode::Normal => "normal",
            PlanMode::Escape => "escape",
            PlanMode::Hold => "hold",
        }
    }
}

/// Conflict resolution outcome: the adopted target, the grid path towards
/// it, and the speed profile over that path (absent when holding).
#[derive(Debug, Clone)]
pub struct ResolveOutcome {
    pub target: Point2,
    pub path: Vec<Point2>,
    pub profile: Option<SpeedProfile>,
    pub mode: PlanMode,
}

#[derive(Debug, Clone, Copy)]
struct ActiveEscape {
    point: Point2,
    cost: f64,
}

/// Per-robot conflict resolution state machine.
///
/// Pipeline per cycle: local goal, grid path, station-time check; on
/// conflict, sampled escape points ranked by cost are tried until one is
/// feasible. The original local goal is re-tested first every cycle, so the
/// escape is abandoned the moment it becomes feasible. Escape entry is
/// gated to cycles where `(cycle + robot id)` is even, which staggers
/// simultaneous symmetric decisions between peers.
#[derive(Debug, Clone, Default)]
pub struct ConflictResolver {
    active: Option<ActiveEscape>,
}

impl ConflictResolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_escaping(&self) -> bool {
        self.active.is_some()
    }

    pub fn reset(&mut self) {
        self.active = None;
    }

    #[allow(clippy::too_many_arguments)]
    pub fn resolve(
        &mut self,
        robot_id: usize,
        cycle: u64,
        pose: &Pose2,
        route: &[Point2],
        grid: &LocalGrid,
        own_shape: &ConvexPolygon,
        teammates: &[TeammatePrediction],
        params: &LocalPlannerParams,
    ) -> ResolveOutcome {
        let local_goal = select_local_goal(route, pose, params.lookahead);
        let local_goal = nudge_to_free(local_goal, grid, params.safety_radius);

        // Try the original goal first, shrinking the lookahead when the
        // grid path fails outright.
        let mut direct: Option<(Vec<Point2>, SpeedProfile)> = None;
        for shrink in [1.0, 0.75, 0.5, 0.25] {
            let goal = if shrink == 1.0 {
                local_goal
            } else {
                nudge_to_free(
                    select_local_goal(route, pose, params.lookahead * shrink),
                    grid,
                    params.safety_radius,
                )
            };
            let Ok(path) = astar_plan(grid, pose.position, goal, params.safety_radius) else {
                continue;
            };
            let st = build_st_graph(
                &path.points,
                own_shape,
                teammates,
                params.delta_s,
                params.dt,
                params.horizon,
            );
            match find_speed_profile(&st, v_max_hint(params)) {
                Ok(profile) => {
                    direct = Some((path.points, profile));
                    break;
                }
                Err(_) if shrink == 1.0 => break, // conflict, not reachability
                Err(_) => continue,
            }
        }
        if let Some((path, profile)) = direct {
            self.active = None;
            return ResolveOutcome {
                target: local_goal,
                path,
                profile: Some(profile),
                mode: PlanMode::Normal,
            };
        }

        // Conflicted. Entering an escape is staggered by id parity; an
        // already active escape may continue on any cycle.
        let may_enter = (cycle + robot_id as u64) % 2 == 0;
        if self.active.is_none() && !may_enter {
            return hold(pose);
        }

        let ranked = rank_candidates(
            sample_escape_points(pose, grid, params),
            local_goal,
            params,
        );
        // Hysteresis: keep the current target unless a candidate beats it
        // by the configured margin.
        let mut ordered: Vec<EscapeCandidate> = Vec::with_capacity(ranked.len() + 1);
        if let Some(active) = self.active {
            let clearance = grid.clearance_at(active.point);
            if clearance >= params.robot_inradius + params.escape_margin {
                let mut keep = EscapeCandidate {
                    point: active.point,
                    sector: Sector::Forward,
                    clearance,
                    heading_change: 0.0,
                    cost: active.cost,
                };
                keep.cost = score_escape_point(&keep, local_goal, params);
                ordered.push(keep);
            }
        }
        let threshold = ordered
            .first()
            .map(|k| k.cost * params.escape_hysteresis)
            .unwrap_or(f64::INFINITY);
        let mut cheaper: Vec<EscapeCandidate> =
            ranked.iter().filter(|c| c.cost < threshold).cloned().collect();
        let rest: Vec<EscapeCandidate> = ranked
            .iter()
            .filter(|c| c.cost >= threshold)
            .cloned()
            .collect();
        cheaper.extend(ordered.into_iter());
        cheaper.extend(rest.into_iter());

        for candidate in cheaper {
            let Ok(path) = astar_plan(grid, pose.position, candidate.point, params.safety_radius)
            else {
                continue;
            };
            let st = build_st_graph(
                &path.points,
                own_shape,
                teammates,
                params.delta_s,
                params.dt,
                params.horizon,
            );
            if let Ok(profile) = find_speed_profile(&st, v_max_hint(params)) {
                self.active = Some(ActiveEscape {
                    point: candidate.point,
                    cost: candidate.cost,
                });
                return ResolveOutcome {
                    target: candidate.point,
                    path: path.points,
                    profile: Some(profile),
                    mode: PlanMode::Escape,
                };
            }
        }
        self.active = None;
        hold(pose)
    }
}

fn hold(pose: &Pose2) -> ResolveOutcome {
    ResolveOutcome {
        target: pose.position,
        path: vec![pose.position],
        profile: None,
        mode: PlanMode::Hold,
    }
}

fn v_max_hint(params: &LocalPlannerParams) -> f64 {
    // Station advance per step implied by the profile grid.
    2.0_f64.min(params.delta_s / params.dt * 2.0)
}

/// Snap a point to the nearest sufficiently clear cell center within a
/// small search radius; deterministic outward ring scan.
pub fn nudge_to_free(p: Point2, grid: &LocalGrid, safety_radius: f64) -> Point2 {
    if grid.clearance_at(p) >= safety_radius && !grid.is_occupied(grid.cell_of(p)) {
        return p;
    }
    let center = grid.cell_of(p);
    let max_ring = (0.8 / grid.resolution()).ceil() as i64;
    for ring in 1..=max_ring {
        let mut best: Option<(f64, Point2)> = None;
        for dx in -ring..=ring {
            for dy in -ring..=ring {
                if dx.abs().max(dy.abs()) != ring {
                    continue;
                }
                let cell = (center.0 + dx, center.1 + dy);
                if grid.is_occupied(cell) || grid.distance_at_cell(cell) < safety_radius {
                    continue;
                }
                let cand = grid.cell_center(cell);
                let d = cand.distance(p);
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, cand));
                }
            }
        }
        if let Some((_, cand)) = best {
            return cand;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_goal_straight_route() {
        let route = vec![Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)];
        let goal = select_local_goal(&route, &Pose2::identity(), 4.0);
        assert!((goal.x - 4.0).abs() < 1e-12);
    }

    #[test]
    fn local_goal_clamps_to_route_end() {
        let route = vec![Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)];
        let goal = select_local_goal(&route, &Pose2::identity(), 20.0);
        assert!((goal.x - 10.0).abs() < 1e-12);
    }

    #[test]
    fn local_goal_wraps_corner() {
        let route = vec![
            Point2::new(0.0, 0.0),
            Point2::new(5.0, 0.0),
            Point2::new(5.0, 5.0),
        ];
        let goal = select_local_goal(&route, &Pose2::identity(), 7.0);
        assert!((goal.x - 5.0).abs() < 1e-12);
        assert!((goal.y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn local_goal_measured_from_projection() {
        let route = vec![Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)];
        let pose = Pose2::new(3.0, 1.0, 0.0);
        let goal = select_local_goal(&route, &pose, 4.0);
        assert!((goal.x - 7.0).abs() < 1e-12);
    }

    #[test]
    fn unobstructed_resolve_returns_normal() {
        let grid = LocalGrid::from_occupancy(0.1, (-60, -60), 120, 120, vec![false; 120 * 120]);
        let route = vec![Point2::new(0.0, 0.0), Point2::new(5.0, 0.0)];
        let shape = ConvexPolygon::rectangle(0.8, 0.4);
        let mut resolver = ConflictResolver::new();
        let out = resolver.resolve(
            0,
            0,
            &Pose2::identity(),
            &route,
            &grid,
            &shape,
            &[],
            &LocalPlannerParams::default(),
        );
        assert_eq!(out.mode, PlanMode::Normal);
        assert!(out.profile.is_some());
        assert!((out.target.x - 4.0).abs() < 0.2);
    }

    #[test]
    fn parked_blocker_triggers_escape() {
        let grid = LocalGrid::from_occupancy(0.1, (-60, -60), 120, 120, vec![false; 120 * 120]);
        let route = vec![Point2::new(0.0, 0.0), Point2::new(5.0, 0.0)];
        let shape = ConvexPolygon::rectangle(0.8, 0.4);
        // Teammate parked right on the local goal area for the whole horizon.
        let parked = TeammatePrediction {
            shape: ConvexPolygon::rectangle(0.8, 0.4),
            poses: vec![Pose2::new(2.0, 0.0, 0.0); 51],
        };
        let mut resolver = ConflictResolver::new();
        let out = resolver.resolve(
            0,
            0,
            &Pose2::identity(),
            &route,
            &grid,
            &shape,
            &[parked],
            &LocalPlannerParams::default(),
        );
        assert_eq!(out.mode, PlanMode::Escape);
        assert!(resolver.is_escaping());
        let target = out.target;
        assert!(grid.clearance_at(target) >= 0.35);
    }

    #[test]
    fn escape_entry_respects_parity() {
        let grid = LocalGrid::from_occupancy(0.1, (-60, -60), 120, 120, vec![false; 120 * 120]);
        let route = vec![Point2::new(0.0, 0.0), Point2::new(5.0, 0.0)];
        let shape = ConvexPolygon::rectangle(0.8, 0.4);
        let parked = TeammatePrediction {
            shape: ConvexPolygon::rectangle(0.8, 0.4),
            poses: vec![Pose2::new(2.0, 0.0, 0.0); 51],
        };
        let mut resolver = ConflictResolver::new();
        // Robot 1 on cycle 0: parity odd, must hold instead of escaping.
        let out = resolver.resolve(
            1,
            0,
            &Pose2::identity(),
            &route,
            &grid,
            &shape,
            &[parked],
            &LocalPlannerParams::default(),
        );
        assert_eq!(out.mode, PlanMode::Hold);
    }

    #[test]
    fn resolve_reverts_when_conflict_clears() {
        let grid = LocalGrid::from_occupancy(0.1, (-60, -60), 120, 120, vec![false; 120 * 120]);
        let route = vec![Point2::new(0.0, 0.0), Point2::new(5.0, 0.0)];
        let shape = ConvexPolygon::rectangle(0.8, 0.4);
        let parked = TeammatePrediction {
            shape: ConvexPolygon::rectangle(0.8, 0.4),
            poses: vec![Pose2::new(2.0, 0.0, 0.0); 51],
        };
        let params = LocalPlannerParams::default();
        let mut resolver = ConflictResolver::new();
        let first = resolver.resolve(
            0,
            0,
            &Pose2::identity(),
            &route,
            &grid,
            &shape,
            &[parked],
            &params,
        );
        assert_eq!(first.mode, PlanMode::Escape);
        // Blocker gone: the very next cycle reverts to the original goal.
        let second = resolver.resolve(0, 1, &Pose2::identity(), &route, &grid, &shape, &[], &params);
        assert_eq!(second.mode, PlanMode::Normal);
        assert!(!resolver.is_escaping());
    }
}
