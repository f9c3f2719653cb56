//! Per-robot planner stack: private-frame mapping, strategic routing,
//! conflict resolution and trajectory refinement. Everything here sees
//! only private-frame data: scans, received messages and odometry.

use std::collections::BTreeMap;

use crate::comms::{Payload, ReceivedMessage, StateMessage, TopologyMessage};
use crate::geometry::{normalize_angle, ConvexPolygon, FrameTransform, Point2, Pose2};
use crate::local_planner::{
    ConflictResolver, LocalGrid, PlanMode, TeammatePrediction,
};
use crate::topology::{
    build_local_graph, find_contours, fuse_maps_into, merge_topologies_with,
    plan_global_route, project_to_image_filtered, simplify_contours, BinaryImage, ContourSet,
    MergePolicy, RouteError, TopoGraph,
};
use crate::trajopt::{
    hold_trajectory, initialize_with_profile, optimize, tangent_heading, OptimizeReport,
    PiecewiseTrajectory, Problem,
};
use crate::world::LidarScan;

use super::SimParams;

/// Remembered state beacon from one peer.
#[derive(Debug, Clone)]
struct PeerState {
    msg: StateMessage,
    transform: FrameTransform,
    received_at: f64,
}

/// Stage wall-clock timings of one cycle, in seconds.
#[derive(Debug, Default, Clone, Copy)]
pub struct StageTimes {
    pub topology_fusion: Option<f64>,
    pub global_plan: Option<f64>,
    pub local_plan: Option<f64>,
    pub trajopt: Option<f64>,
}

pub struct RobotPlanner {
    pub id: usize,
    /// Mission endpoints in the private frame.
    pub start: Point2,
    pub goal: Point2,
    pub shape: ConvexPolygon,
    map_image: BinaryImage,
    graph: TopoGraph,
    pub route: Vec<Point2>,
    contours_out: ContourSet,
    contour_revision: u64,
    sent_revision: BTreeMap<usize, u64>,
    peer_states: BTreeMap<usize, PeerState>,
    topo_inbox: Vec<(FrameTransform, TopologyMessage)>,
    resolver: ConflictResolver,
    pub trajectory: PiecewiseTrajectory,
    pub traj_started_at: f64,
    pub mode: PlanMode,
    pub arrived: bool,
    crtp_cycle: u64,
    pub last_opt_report: Option<OptimizeReport>,
}

impl RobotPlanner {
    pub fn new(id: usize, start_pose: &Pose2, goal: Point2, params: &SimParams) -> Self {
        let shape = ConvexPolygon::rectangle(params.footprint_length, params.footprint_width);
        Self {
            id,
            start: start_pose.position,
            goal,
            shape,
            map_image: BinaryImage::new(params.resolution),
            graph: TopoGraph::empty(),
            route: vec![start_pose.position, goal],
            contours_out: ContourSet::empty(&format!("robot{id}")),
            contour_revision: 0,
            sent_revision: BTreeMap::new(),
            peer_states: BTreeMap::new(),
            topo_inbox: Vec::new(),
            resolver: ConflictResolver::new(),
            trajectory: hold_trajectory(start_pose, 1.0),
            traj_started_at: 0.0,
            mode: PlanMode::Hold,
            arrived: false,
            crtp_cycle: 0,
            last_opt_report: None,
        }
    }

    pub fn graph(&self) -> &TopoGraph {
        &self.graph
    }

    pub fn map_image(&self) -> &BinaryImage {
        &self.map_image
    }

    pub fn contours_out(&self) -> &ContourSet {
        &self.contours_out
    }

    /// Buffer freshly delivered messages. State beacons update the peer
    /// table immediately; topology payloads wait for the next strategic
    /// cycle.
    pub fn ingest(&mut self, now: f64, messages: Vec<ReceivedMessage>) {
        for m in messages {
            match m.payload {
                Payload::State(s) => {
                    self.peer_states.insert(
                        m.from,
                        PeerState {
                            msg: s,
                            transform: m.transform,
                            received_at: now,
                        },
                    );
                }
                Payload::Topology(tmsg) => {
                    self.topo_inbox.push((m.transform, tmsg));
                }
            }
        }
    }

    /// Predicted positions of known peers at `now`, used to keep teammate
    /// bodies out of the static map.
    pub fn peer_position_estimates(&self, now: f64) -> Vec<(Point2, f64)> {
        let mut out = Vec::new();
        for peer in self.peer_states.values() {
            let pose = self.predict_peer_pose(peer, now, 0.0);
            out.push((pose.position, 0.8));
        }
        out
    }

    fn predict_peer_pose(&self, peer: &PeerState, now: f64, ahead: f64) -> Pose2 {
        let age = now - peer.received_at;
        let pose_local = {
            let tau = peer.msg.trajectory_age + age + ahead;
            let state = peer.msg.trajectory.evaluate(tau);
            let heading = if state.vel.norm() > 0.05 {
                state.vel.y.atan2(state.vel.x)
            } else {
                peer.msg.pose.heading
            };
            Pose2 {
                position: state.pos,
                heading,
            }
        };
        peer.transform.apply_pose(&pose_local)
    }

    /// Strategic update: project the scan, fuse buffered teammate
    /// contours, re-extract and simplify, rebuild the local visibility
    /// graph, merge it into the global one and replan the route.
    /// `fuse_teammates` is disabled by the topology-sharing ablation.
    pub fn tsgg_update(
        &mut self,
        now: f64,
        scan: &LidarScan,
        pose: &Pose2,
        params: &SimParams,
        fuse_teammates: bool,
        times: &mut StageTimes,
    ) {
        let t0 = std::time::Instant::now();
        let exclusions = if params.filter_teammates {
            self.peer_position_estimates(now)
        } else {
            Vec::new()
        };
        let ego = project_to_image_filtered(scan, params.resolution, &exclusions);
        let ego_contours = find_contours(&ego, params.min_component_cells, &format!("robot{}", self.id));
        fuse_maps_into(
            &mut self.map_image,
            &ego_contours,
            &FrameTransform::identity(),
        );
        if fuse_teammates {
            let inbox = std::mem::take(&mut self.topo_inbox);
            for (transform, msg) in inbox {
                fuse_maps_into(&mut self.map_image, &msg.contours, &transform);
            }
        } else {
            self.topo_inbox.clear();
        }
        let fused = find_contours(
            &self.map_image,
            params.min_component_cells,
            &format!("robot{}", self.id),
        );
        let simplified = simplify_contours(&fused, params.simplify_epsilon);
        if simplified != self.contours_out {
            self.contours_out = simplified.clone();
            self.contour_revision += 1;
        }
        times.topology_fusion = Some(t0.elapsed().as_secs_f64());

        let t1 = std::time::Instant::now();
        let mut local = build_local_graph(&simplified, self.start, self.goal, &params.graph);
        local.stamp = (now / params.tick_dt).round() as u64;
        self.graph = merge_topologies_with(
            &self.graph,
            &local,
            params.graph.match_radius,
            params.graph.clearance_margin,
            MergePolicy::ReplaceContours,
        );
        self.route = match plan_global_route(
            &self.graph,
            pose.position,
            self.goal,
            params.graph.clearance_margin,
            params.route_mode,
        ) {
            Ok(route) => route,
            Err(RouteError::StartDisconnected) | Err(RouteError::Unreachable) => {
                // Optimistic fallback through unknown space.
                vec![pose.position, self.goal]
            }
            Err(RouteError::GoalEnclosed) => vec![pose.position, self.goal],
        };
        times.global_plan = Some(t1.elapsed().as_secs_f64());
    }

    /// Topology payload for `peer` if the contours changed since the last
    /// send to that peer.
    pub fn topology_payload_for(&mut self, peer: usize, tick: u64) -> Option<Payload> {
        let last = self.sent_revision.get(&peer).copied().unwrap_or(0);
        if self.contour_revision == 0 || last == self.contour_revision {
            return None;
        }
        self.sent_revision.insert(peer, self.contour_revision);
        Some(Payload::Topology(TopologyMessage {
            sender: self.id as u16,
            timestep: tick as u32,
            contours: self.contours_out.clone(),
            sender_goal: self.goal,
        }))
    }

    fn teammate_predictions(&self, now: f64, params: &SimParams) -> Vec<TeammatePrediction> {
        let steps = (params.local.horizon / params.local.dt).round() as usize;
        let mut out = Vec::new();
        for peer in self.peer_states.values() {
            let age = now - peer.received_at;
            let stale = age > 1.0;
            let mut poses = Vec::with_capacity(steps + 1);
            if stale {
                // Constant-velocity extrapolation from the last beacon.
                let base = peer.transform.apply_pose(&peer.msg.pose);
                let dir = base.heading_vector();
                let speed = peer.msg.velocity.0;
                for j in 0..=steps {
                    let tau = age + j as f64 * params.local.dt;
                    poses.push(Pose2 {
                        position: base.position + dir * (speed * tau),
                        heading: base.heading,
                    });
                }
            } else {
                for j in 0..=steps {
                    poses.push(self.predict_peer_pose(peer, now, j as f64 * params.local.dt));
                }
            }
            out.push(TeammatePrediction {
                shape: ConvexPolygon::rectangle(params.footprint_length, params.footprint_width),
                poses,
            });
        }
        out
    }

    /// Tactical update: conflict-aware local plan plus trajectory
    /// refinement. With conflict resolution ablated the planner proceeds
    /// on the direct path and simply holds while the profile is
    /// infeasible.
    #[allow(clippy::too_many_arguments)]
    pub fn crtp_update(
        &mut self,
        now: f64,
        pose: &Pose2,
        velocity: (f64, f64),
        params: &SimParams,
        conflict_resolution: bool,
        times: &mut StageTimes,
    ) {
        self.crtp_cycle += 1;
        if self.arrived {
            self.trajectory = hold_trajectory(pose, params.local.horizon);
            self.traj_started_at = now;
            self.mode = PlanMode::Hold;
            return;
        }
        let t0 = std::time::Instant::now();
        let crop_radius = params.local.lookahead + params.lidar_range + 1.0;
        let grid = LocalGrid::from_image(&self.map_image, pose.position, crop_radius);
        let teammates = self.teammate_predictions(now, params);

        let outcome = if conflict_resolution {
            self.resolver.resolve(
                self.id,
                self.crtp_cycle,
                pose,
                &self.route,
                &grid,
                &self.shape,
                &teammates,
                &params.local,
            )
        } else {
            direct_only(
                self.id,
                pose,
                &self.route,
                &grid,
                &self.shape,
                &teammates,
                params,
            )
        };
        times.local_plan = Some(t0.elapsed().as_secs_f64());

        let t1 = std::time::Instant::now();
        self.mode = outcome.mode;
        match (&outcome.profile, outcome.path.len()) {
            (Some(profile), n) if n >= 2 => {
                let start_vel = pose.heading_vector() * velocity.0;
                let init = initialize_with_profile(&outcome.path, profile, start_vel, 0.5);
                let problem = Problem::new(
                    &init,
                    Some(&grid),
                    &teammates,
                    params.local.dt,
                    &self.shape,
                    &params.opt,
                );
                match optimize(&problem, &init) {
                    Ok((traj, report)) => {
                        self.trajectory = traj;
                        self.last_opt_report = Some(report);
                    }
                    Err(_) => {
                        self.trajectory = init;
                        self.last_opt_report = None;
                    }
                }
                self.traj_started_at = now;
            }
            _ => {
                self.trajectory = hold_trajectory(pose, params.local.horizon);
                self.traj_started_at = now;
                if outcome.profile.is_none() {
                    self.mode = PlanMode::Hold;
                }
            }
        }
        times.trajopt = Some(t1.elapsed().as_secs_f64());
    }

    /// State beacon payload for the current cycle.
    pub fn state_payload(&self, tick: u64, now: f64, pose: &Pose2, velocity: (f64, f64)) -> Payload {
        Payload::State(StateMessage {
            sender: self.id as u16,
            timestep: tick as u32,
            pose: *pose,
            velocity,
            trajectory: self.trajectory.clone(),
            trajectory_age: now - self.traj_started_at,
        })
    }

    /// Differential-drive command for the next tick: follow the flat
    /// output, inserting an in-place rotation whenever the tangent
    /// disagrees with the heading by more than the alignment threshold.
    pub fn command(&self, now: f64, pose: &Pose2, params: &SimParams) -> (f64, f64) {
        if self.arrived {
            return (0.0, 0.0);
        }
        let tau = now - self.traj_started_at + params.tick_dt;
        if let Some(target_heading) = tangent_heading(&self.trajectory, tau, 0.05) {
            let err = normalize_angle(target_heading - pose.heading);
            if err.abs() > params.heading_align_threshold {
                let omega = err.signum() * params.opt.omega_max;
                return (0.0, omega);
            }
        }
        let (v, omega, _) = crate::trajopt::flat_to_command(&self.trajectory, tau, &params.opt);
        // Soft heading correction on top of the feedforward rate.
        if let Some(target_heading) = tangent_heading(&self.trajectory, tau, 0.05) {
            let err = normalize_angle(target_heading - pose.heading);
            let omega = (omega + 2.0 * err).clamp(-params.opt.omega_max, params.opt.omega_max);
            return (v, omega);
        }
        (v, omega)
    }
}

/// Ablated tactical pipeline: direct path and speed profile only; hold on
/// conflict instead of sampling escape points.
fn direct_only(
    _id: usize,
    pose: &Pose2,
    route: &[Point2],
    grid: &LocalGrid,
    shape: &ConvexPolygon,
    teammates: &[TeammatePrediction],
    params: &SimParams,
) -> crate::local_planner::ResolveOutcome {
    use crate::local_planner::{
        astar_plan, build_st_graph, find_speed_profile, nudge_to_free, select_local_goal,
        ResolveOutcome,
    };
    let local_goal = nudge_to_free(
        select_local_goal(route, pose, params.local.lookahead),
        grid,
        params.local.safety_radius,
    );
    let hold = ResolveOutcome {
        target: pose.position,
        path: vec![pose.position],
        profile: None,
        mode: PlanMode::Hold,
    };
    let Ok(path) = astar_plan(grid, pose.position, local_goal, params.local.safety_radius) else {
        return hold;
    };
    let st = build_st_graph(
        &path.points,
        shape,
        teammates,
        params.local.delta_s,
        params.local.dt,
        params.local.horizon,
    );
    match find_speed_profile(&st, params.opt.v_max) {
        Ok(profile) => ResolveOutcome {
            target: local_goal,
            path: path.points,
            profile: Some(profile),
            mode: PlanMode::Normal,
        },
        Err(_) => hold,
    }
}
