//! Station-time conflict analysis: occupancy of (station, time) cells by
//! teammates' predicted footprints, and earliest-arrival speed profiles.

use crate::geometry::{polygons_overlap, ConvexPolygon, Point2, Pose2};

/// A teammate's predicted motion over the planning horizon: its body
/// polygon and one pose per time step (already in the planning frame).
#[derive(Debug, Clone)]
pub struct TeammatePrediction {
    pub shape: ConvexPolygon,
    pub poses: Vec<Pose2>,
}

/// Station-time occupancy over a reference path. Station k sits at
/// arc-length `k * delta_s`; time index j at `j * dt`.
#[derive(Debug, Clone)]
pub struct STGraph {
    pub delta_s: f64,
    pub dt: f64,
    pub stations: Vec<Pose2>,
    pub steps: usize,
    occupied: Vec<bool>,
}

impl STGraph {
    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    pub fn is_occupied(&self, station: usize, step: usize) -> bool {
        self.occupied[step * self.stations.len() + station]
    }

    pub fn occupied_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..=self.steps {
            for k in 0..self.stations.len() {
                if self.is_occupied(k, j) {
                    out.push((k, j));
                }
            }
        }
        out
    }
}

/// Resample a polyline at `delta_s` arc-length steps; each sample carries
/// the tangent heading of the segment it lies on.
pub fn resample_path(path: &[Point2], delta_s: f64) -> Vec<Pose2> {
    assert!(!path.is_empty());
    let mut heading = 0.0;
    for w in path.windows(2) {
        let d = w[1] - w[0];
        if d.norm() > 1e-12 {
            heading = d.y.atan2(d.x);
            break;
        }
    }
    let mut out = vec![Pose2 {
        position: path[0],
        heading,
    }];
    if path.len() < 2 {
        return out;
    }
    let mut remaining = delta_s;
    let mut cursor = path[0];
    let mut i = 1;
    while i < path.len() {
        let target = path[i];
        let seg = target - cursor;
        let len = seg.norm();
        if len < 1e-12 {
            i += 1;
            continue;
        }
        if len >= remaining {
            let dir = seg * (1.0 / len);
            cursor = cursor + dir * remaining;
            out.push(Pose2 {
                position: cursor,
                heading: dir.y.atan2(dir.x),
            });
            remaining = delta_s;
        } else {
            remaining -= len;
            cursor = target;
            i += 1;
        }
    }
    // Make sure the final point is represented.
    let last = *path.last().unwrap();
    if out.last().map(|p| p.position.distance(last) > 1e-9) == Some(true) {
        let dir = last - out.last().unwrap().position;
        let heading = if dir.norm() > 1e-12 {
            dir.y.atan2(dir.x)
        } else {
            out.last().unwrap().heading
        };
        out.push(Pose2 {
            position: last,
            heading,
        });
    }
    out
}

/// Mark cell (k, j) occupied whenever the own footprint placed at station k
/// (oriented along the path tangent) overlaps any teammate footprint at
/// time j * dt. Overlap tests are exact.
pub fn build_st_graph(
    path: &[Point2],
    own_shape: &ConvexPolygon,
    teammates: &[TeammatePrediction],
    delta_s: f64,
    dt: f64,
    horizon: f64,
) -> STGraph {
    assert!(!path.is_empty());
    let stations = resample_path(path, delta_s);
    let steps = (horizon / dt).round() as usize;
    let mut occupied = vec![false; stations.len() * (steps + 1)];

    let own_polys: Vec<ConvexPolygon> = stations
        .iter()
        .map(|pose| own_shape.transformed(pose))
        .collect();
    let own_radius = own_shape.bounding_radius();

    for tm in teammates {
        let tm_radius = tm.shape.bounding_radius();
        let reject = own_radius + tm_radius;
        for j in 0..=steps {
            let pose = tm.poses.get(j.min(tm.poses.len().saturating_sub(1)));
            let Some(pose) = pose else { continue };
            let tm_poly = tm.shape.transformed(pose);
            for (k, own) in own_polys.iter().enumerate() {
                if stations[k].position.distance(pose.position) > reject {
                    continue;
                }
                if polygons_overlap(own, &tm_poly) {
                    occupied[j * stations.len() + k] = true;
                }
            }
        }
    }
    STGraph {
        delta_s,
        dt,
        stations,
        steps,
        occupied,
    }
}

/// Monotone station-per-time-step profile through free ST cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    pub s_indices: Vec<usize>,
    pub delta_s: f64,
    pub dt: f64,
}

impl SpeedProfile {
    /// Arrival time: the profile ends the step it first reaches the final
    /// station.
    pub fn arrival_time(&self) -> f64 {
        (self.s_indices.len().saturating_sub(1)) as f64 * self.dt
    }

    /// Station index at time step j, holding the final station afterwards.
    pub fn station_at(&self, j: usize) -> usize {
        *self
            .s_indices
            .get(j)
            .unwrap_or_else(|| self.s_indices.last().expect("non-empty profile"))
    }

    /// Arc length along the reference path at continuous time `t`,
    /// linearly interpolated between steps.
    pub fn arc_length_at(&self, t: f64) -> f64 {
        if self.s_indices.is_empty() {
            return 0.0;
        }
        let ft = (t / self.dt).clamp(0.0, (self.s_indices.len() - 1).max(0) as f64);
        let j = ft.floor() as usize;
        let frac = ft - j as f64;
        let a = self.s_indices[j] as f64;
        let b = self.s_indices[(j + 1).min(self.s_indices.len() - 1)] as f64;
        (a + (b - a) * frac) * self.delta_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileError {
    /// The robot's current cell is already inside a predicted conflict.
    StartOccupied,
    /// No monotone profile reaches the final station within the horizon.
    NoProfile,
}

/// Earliest-arrival dynamic programming over the ST cells; per step the
/// station advance ranges over 0..=floor(v_max * dt / delta_s).
pub fn find_speed_profile(st: &STGraph, v_max: f64) -> Result<SpeedProfile, ProfileError> {
    let stations = st.station_count();
    let max_adv = ((v_max * st.dt) / st.delta_s + 1e-9).floor() as usize;
    if st.is_occupied(0, 0) {
        return Err(ProfileError::StartOccupied);
    }
    if stations == 1 {
        return Ok(SpeedProfile {
            s_indices: vec![0],
            delta_s: st.delta_s,
            dt: st.dt,
        });
    }
    let last = stations - 1;
    let mut reach = vec![vec![false; stations]; st.steps + 1];
    reach[0][0] = true;
    let mut arrival: Option<usize> = None;
    for j in 1..=st.steps {
        // Sliding-window OR over the previous step.
        let (prev_rows, cur_rows) = reach.split_at_mut(j);
        let prev = &prev_rows[j - 1];
        let cur = &mut cur_rows[0];
        let mut any = false;
        for k in 0..stations {
            if st.is_occupied(k, j) {
                continue;
            }
            let lo = k.saturating_sub(max_adv);
            if prev[lo..=k].iter().any(|&r| r) {
                cur[k] = true;
                any = true;
            }
        }
        if reach[j][last] {
            arrival = Some(j);
            break;
        }
        if !any {
            return Err(ProfileError::NoProfile);
        }
    }
    let Some(arrival) = arrival else {
        return Err(ProfileError::NoProfile);
    };
    // Backtrack preferring the most advanced feasible predecessor.
    let mut s_indices = vec![0usize; arrival + 1];
    s_indices[arrival] = last;
    for j in (1..=arrival).rev() {
        let k = s_indices[j];
        let lo = k.saturating_sub(max_adv);
        let mut chosen = None;
        for cand in (lo..=k).rev() {
            if reach[j - 1][cand] {
                chosen = Some(cand);
                break;
            }
        }
        s_indices[j - 1] = chosen.expect("reachable chain");
    }
    Ok(SpeedProfile {
        s_indices,
        delta_s: st.delta_s,
        dt: st.dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_path(len: f64) -> Vec<Point2> {
        vec![Point2::new(0.0, 0.0), Point2::new(len, 0.0)]
    }

    fn robot_shape() -> ConvexPolygon {
        ConvexPolygon::rectangle(0.8, 0.4)
    }

    #[test]
    fn no_teammates_no_occupancy() {
        let st = build_st_graph(&straight_path(4.0), &robot_shape(), &[], 0.1, 0.1, 5.0);
        assert!(st.occupied_cells().is_empty());
    }

    #[test]
    fn empty_graph_reaches_end_at_min_time() {
        let st = build_st_graph(&straight_path(4.0), &robot_shape(), &[], 0.1, 0.1, 5.0);
        let profile = find_speed_profile(&st, 2.0).unwrap();
        assert!((profile.arrival_time() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn parked_teammate_makes_full_height_band() {
        let steps = 50;
        let parked = TeammatePrediction {
            shape: robot_shape(),
            poses: vec![Pose2::new(2.0, 0.0, 0.0); steps + 1],
        };
        let st = build_st_graph(&straight_path(4.0), &robot_shape(), &[parked], 0.1, 0.1, 5.0);
        // Band around station index 20 at every time step.
        for j in 0..=steps {
            assert!(st.is_occupied(20, j));
        }
        // Far stations stay free.
        for j in 0..=steps {
            assert!(!st.is_occupied(0, j));
            assert!(!st.is_occupied(40, j));
        }
    }

    #[test]
    fn fully_blocked_is_infeasible() {
        let steps = 50;
        // A wall of parked teammates across every station.
        let teammates: Vec<TeammatePrediction> = (0..=8)
            .map(|i| TeammatePrediction {
                shape: ConvexPolygon::rectangle(0.9, 0.9),
                poses: vec![Pose2::new(0.5 * i as f64, 0.0, 0.0); steps + 1],
            })
            .collect();
        let st = build_st_graph(&straight_path(4.0), &robot_shape(), &teammates, 0.1, 0.1, 5.0);
        assert_eq!(find_speed_profile(&st, 2.0), Err(ProfileError::StartOccupied));
    }

    #[test]
    fn start_conflict_reported() {
        let parked = TeammatePrediction {
            shape: robot_shape(),
            poses: vec![Pose2::new(0.0, 0.1, 0.0); 51],
        };
        let st = build_st_graph(&straight_path(4.0), &robot_shape(), &[parked], 0.1, 0.1, 5.0);
        assert_eq!(find_speed_profile(&st, 2.0), Err(ProfileError::StartOccupied));
    }

    #[test]
    fn waits_for_moving_blockage_to_clear() {
        // Teammate sits on the path until t = 1 s, then leaves.
        let mut poses = Vec::new();
        for j in 0..=50 {
            let t = j as f64 * 0.1;
            if t < 1.0 {
                poses.push(Pose2::new(1.0, 0.0, 0.0));
            } else {
                poses.push(Pose2::new(1.0, 10.0, 0.0));
            }
        }
        let tm = TeammatePrediction {
            shape: robot_shape(),
            poses,
        };
        let st = build_st_graph(&straight_path(4.0), &robot_shape(), &[tm], 0.1, 0.1, 5.0);
        let profile = find_speed_profile(&st, 2.0).unwrap();
        // Earliest arrival must be later than the unobstructed 2.0 s but
        // still reach the end.
        assert!(profile.arrival_time() > 2.0);
        assert_eq!(profile.station_at(profile.s_indices.len() - 1), 40);
        // The replayed profile never sits on an occupied cell.
        for (j, &k) in profile.s_indices.iter().enumerate() {
            assert!(!st.is_occupied(k, j));
        }
    }

    #[test]
    fn resample_accumulates_arc_length() {
        let path = vec![
            Point2::new(0.0, 0.0),
            Point2::new(5.0, 0.0),
            Point2::new(5.0, 5.0),
        ];
        let samples = resample_path(&path, 0.5);
        // 10 m total -> 21 samples.
        assert_eq!(samples.len(), 21);
        let seven_m = samples[14].position;
        assert!((seven_m.x - 5.0).abs() < 1e-9);
        assert!((seven_m.y - 2.0).abs() < 1e-9);
    }
}
