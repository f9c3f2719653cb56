//! Visibility graph over contour corners plus start and goal, and the
//! merge of a freshly built local graph into the persistent global one.

use std::collections::BTreeMap;

use crate::geometry::{point_segment_distance, segment_segment_distance, Point2};

use super::ContourSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum VertexKind {
    ContourCorner,
    Start,
    Goal,
}

#[derive(Debug, Clone, Copy)]
pub struct TopoVertex {
    pub id: u32,
    pub position: Point2,
    pub kind: VertexKind,
}

/// Undirected visibility graph. Edges are stored once with `a < b`; the
/// source contours are retained so merges can re-validate edges and route
/// planning can attach free-space query points.
#[derive(Debug, Clone)]
pub struct TopoGraph {
    pub vertices: Vec<TopoVertex>,
    pub edges: BTreeMap<(u32, u32), f64>,
    pub contours: ContourSet,
    pub stamp: u64,
    next_id: u32,
}

/// How a merge treats the two source contour sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergePolicy {
    /// Validate against and keep the union of both contour sets.
    UnionContours,
    /// Keep only the incoming local contours (appropriate when the local
    /// graph was built from the fully accumulated map image).
    ReplaceContours,
}

impl TopoGraph {
    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            edges: BTreeMap::new(),
            contours: ContourSet::empty(""),
            stamp: 0,
            next_id: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex(&self, id: u32) -> Option<&TopoVertex> {
        self.vertices.iter().find(|v| v.id == id)
    }

    fn push_vertex(&mut self, position: Point2, kind: VertexKind) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        self.vertices.push(TopoVertex { id, position, kind });
        id
    }

    fn add_edge(&mut self, a: u32, b: u32, length: f64) {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.insert(key, length);
    }

    pub fn neighbors(&self, id: u32) -> Vec<(u32, f64)> {
        self.edges
            .iter()
            .filter_map(|(&(a, b), &len)| {
                if a == id {
                    Some((b, len))
                } else if b == id {
                    Some((a, len))
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Minimum distance from a segment to every contour polyline.
pub fn segment_contour_clearance(seg: (Point2, Point2), contours: &ContourSet) -> f64 {
    let mut best = f64::INFINITY;
    let seg_min_x = seg.0.x.min(seg.1.x);
    let seg_max_x = seg.0.x.max(seg.1.x);
    let seg_min_y = seg.0.y.min(seg.1.y);
    let seg_max_y = seg.0.y.max(seg.1.y);
    for contour in &contours.contours {
        let n = contour.len();
        for i in 0..n {
            let a = contour[i];
            let b = contour[(i + 1) % n];
            // Cheap reject: bounding boxes farther apart than the best
            // known distance cannot improve it.
            let dx = (a.x.min(b.x) - seg_max_x).max(seg_min_x - a.x.max(b.x)).max(0.0);
            let dy = (a.y.min(b.y) - seg_max_y).max(seg_min_y - a.y.max(b.y)).max(0.0);
            if dx * dx + dy * dy >= best * best {
                continue;
            }
            best = best.min(segment_segment_distance(seg, (a, b)));
            if best == 0.0 {
                return 0.0;
            }
        }
    }
    best
}

/// Whether the segment keeps at least `margin` clearance from all contours.
pub fn segment_is_clear(seg: (Point2, Point2), contours: &ContourSet, margin: f64) -> bool {
    segment_contour_clearance(seg, contours) >= margin
}

fn point_contour_clearance(p: Point2, contour: &[Point2]) -> f64 {
    let n = contour.len();
    (0..n)
        .map(|i| point_segment_distance(p, (contour[i], contour[(i + 1) % n])))
        .fold(f64::INFINITY, f64::min)
}

/// Offset corner vertices of one simplified contour: each corner is pushed
/// `offset` along its outward bisector, choosing the side with more room.
fn offset_corners(contour: &[Point2], offset: f64) -> Vec<Point2> {
    let n = contour.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let v = contour[k];
        let u = contour[(k + n - 1) % n];
        let w = contour[(k + 1) % n];
        let d1 = (v - u).normalized();
        let d2 = (v - w).normalized();
        let mut bis = d1 + d2;
        if bis.norm() < 1e-9 {
            // Straight through-point: offset perpendicular to the wall.
            bis = d1.perp();
        }
        let bis = bis.normalized();
        let cand_a = v + bis * offset;
        let cand_b = v - bis * offset;
        let da = point_contour_clearance(cand_a, contour);
        let db = point_contour_clearance(cand_b, contour);
        let chosen = if (da - db).abs() < 1e-12 {
            // Symmetric (typically a free-standing wall); deterministic pick.
            if (cand_a.x, cand_a.y) >= (cand_b.x, cand_b.y) {
                cand_a
            } else {
                cand_b
            }
        } else if da > db {
            cand_a
        } else {
            cand_b
        };
        out.push(chosen);
    }
    out
}

/// Parameters for graph construction and merging.
#[derive(Debug, Clone, Copy)]
pub struct GraphParams {
    pub vertex_offset: f64,
    pub clearance_margin: f64,
    pub match_radius: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            vertex_offset: 0.45,
            clearance_margin: 0.3,
            match_radius: 0.3,
        }
    }
}

/// Build the visibility graph for a simplified contour set: offset contour
/// corners plus start and goal, with an edge wherever the connecting
/// segment clears every contour by `clearance_margin`.
pub fn build_local_graph(
    contours: &ContourSet,
    start: Point2,
    goal: Point2,
    params: &GraphParams,
) -> TopoGraph {
    let mut graph = TopoGraph::empty();
    graph.contours = contours.clone();
    for contour in &contours.contours {
        for corner in offset_corners(contour, params.vertex_offset) {
            graph.push_vertex(corner, VertexKind::ContourCorner);
        }
    }
    let start_id = graph.push_vertex(start, VertexKind::Start);
    let goal_id = graph.push_vertex(goal, VertexKind::Goal);
    let _ = (start_id, goal_id);

    let n = graph.vertices.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = graph.vertices[i];
            let b = graph.vertices[j];
            if segment_is_clear((a.position, b.position), contours, params.clearance_margin) {
                graph.add_edge(a.id, b.id, a.position.distance(b.position));
            }
        }
    }
    graph
}

/// Merge a freshly built local graph into the persistent global graph.
///
/// Vertices of the same kind within `match_radius` unify, keeping the
/// newest observed position. Surviving edges from both graphs are then
/// re-validated against the merge's contour set and dropped when newly
/// observed obstacles invalidate them.
pub fn merge_topologies(
    global_prev: &TopoGraph,
    local_now: &TopoGraph,
    match_radius: f64,
    clearance_margin: f64,
) -> TopoGraph {
    merge_topologies_with(
        global_prev,
        local_now,
        match_radius,
        clearance_margin,
        MergePolicy::UnionContours,
    )
}

pub fn merge_topologies_with(
    global_prev: &TopoGraph,
    local_now: &TopoGraph,
    match_radius: f64,
    clearance_margin: f64,
    policy: MergePolicy,
) -> TopoGraph {
    if global_prev.is_empty() {
        let mut g = local_now.clone();
        g.stamp = local_now.stamp;
        return g;
    }

    let mut merged = TopoGraph::empty();
    merged.stamp = local_now.stamp.max(global_prev.stamp);

    // Carry over the previous vertices, preserving ids.
    let mut prev_map: BTreeMap<u32, u32> = BTreeMap::new();
    for v in &global_prev.vertices {
        let id = merged.push_vertex(v.position, v.kind);
        prev_map.insert(v.id, id);
    }

    // Unify local vertices into the carried set, newest position wins.
    let mut local_map: BTreeMap<u32, u32> = BTreeMap::new();
    for v in &local_now.vertices {
        let mut best: Option<(f64, usize)> = None;
        for (idx, m) in merged.vertices.iter().enumerate() {
            if m.kind != v.kind {
                continue;
            }
            let d = m.position.distance(v.position);
            if d <= match_radius && best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, idx));
            }
        }
        match best {
            Some((_, idx)) => {
                merged.vertices[idx].position = v.position;
                local_map.insert(v.id, merged.vertices[idx].id);
            }
            None => {
                let id = merged.push_vertex(v.position, v.kind);
                local_map.insert(v.id, id);
            }
        }
    }

    merged.contours = match policy {
        MergePolicy::UnionContours => {
            let mut union = global_prev.contours.clone();
            union
                .contours
                .extend(local_now.contours.contours.iter().cloned());
            union.frame_tag = local_now.contours.frame_tag.clone();
            union
        }
        MergePolicy::ReplaceContours => local_now.contours.clone(),
    };

    // Re-validate the union of both edge sets against the merged contours.
    let mut candidate_edges: Vec<(u32, u32)> = Vec::new();
    for (&(a, b), _) in &global_prev.edges {
        candidate_edges.push((prev_map[&a], prev_map[&b]));
    }
    for (&(a, b), _) in &local_now.edges {
        candidate_edges.push((local_map[&a], local_map[&b]));
    }
    candidate_edges.sort();
    candidate_edges.dedup();
    let positions: BTreeMap<u32, Point2> = merged
        .vertices
        .iter()
        .map(|v| (v.id, v.position))
        .collect();
    for (a, b) in candidate_edges {
        if a == b {
            continue;
        }
        let pa = positions[&a];
        let pb = positions[&b];
        if segment_is_clear((pa, pb), &merged.contours, clearance_margin) {
            merged.add_edge(a, b, pa.distance(pb));
        }
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_contour(cx: f64, cy: f64, half: f64) -> Vec<Point2> {
        vec![
            Point2::new(cx - half, cy - half),
            Point2::new(cx + half, cy - half),
            Point2::new(cx + half, cy + half),
            Point2::new(cx - half, cy + half),
        ]
    }

    fn params() -> GraphParams {
        GraphParams::default()
    }

    #[test]
    fn no_contours_direct_edge() {
        let cs = ContourSet::empty("f");
        let g = build_local_graph(&cs, Point2::new(0.0, 0.0), Point2::new(5.0, 0.0), &params());
        assert_eq!(g.vertices.len(), 2);
        assert_eq!(g.edges.len(), 1);
        let len = *g.edges.values().next().unwrap();
        assert!((len - 5.0).abs() < 1e-9);
    }

    #[test]
    fn square_blocks_direct_edge() {
        let cs = ContourSet {
            contours: vec![square_contour(2.5, 0.0, 1.0)],
            frame_tag: "f".into(),
        };
        let start = Point2::new(0.0, 0.0);
        let goal = Point2::new(5.0, 0.0);
        let g = build_local_graph(&cs, start, goal, &params());
        assert_eq!(g.vertices.len(), 6);
        let start_id = g.vertices.iter().find(|v| v.kind == VertexKind::Start).unwrap().id;
        let goal_id = g.vertices.iter().find(|v| v.kind == VertexKind::Goal).unwrap().id;
        let key = if start_id < goal_id {
            (start_id, goal_id)
        } else {
            (goal_id, start_id)
        };
        assert!(!g.edges.contains_key(&key), "direct edge must be blocked");
        // Start and goal each see the two offset corners on their side.
        let start_deg = g.neighbors(start_id).len();
        let goal_deg = g.neighbors(goal_id).len();
        assert_eq!(start_deg, 2);
        assert_eq!(goal_deg, 2);
    }

    #[test]
    fn corner_offsets_point_outward() {
        let contour = square_contour(0.0, 0.0, 1.0);
        let offsets = offset_corners(&contour, 0.45);
        for (corner, off) in contour.iter().zip(offsets.iter()) {
            assert!(off.norm() > corner.norm(), "offset must move away from the square");
        }
    }

    #[test]
    fn merge_with_empty_local_keeps_global() {
        let cs = ContourSet {
            contours: vec![square_contour(2.0, 0.0, 0.5)],
            frame_tag: "f".into(),
        };
        let g = build_local_graph(&cs, Point2::new(0.0, 0.0), Point2::new(4.0, 0.0), &params());
        let merged = merge_topologies(&g, &TopoGraph::empty(), 0.3, 0.3);
        assert_eq!(merged.vertices.len(), g.vertices.len());
        assert_eq!(merged.edges.len(), g.edges.len());
    }

    #[test]
    fn merge_identical_graphs_idempotent() {
        let cs = ContourSet {
            contours: vec![square_contour(2.0, 0.0, 0.5)],
            frame_tag: "f".into(),
        };
        let g = build_local_graph(&cs, Point2::new(0.0, 0.0), Point2::new(4.0, 0.0), &params());
        let once = merge_topologies(&g, &g, 0.3, 0.3);
        assert_eq!(once.vertices.len(), g.vertices.len());
        assert_eq!(once.edges.len(), g.edges.len());
        let twice = merge_topologies(&once, &g, 0.3, 0.3);
        assert_eq!(twice.vertices.len(), once.vertices.len());
        assert_eq!(twice.edges.len(), once.edges.len());
    }

    #[test]
    fn half_observations_unify_shared_corners() {
        // Two partial views of one square: four offset corners each, two
        // pairs coinciding within the match radius, so 8 raw vertices merge
        // into 6.
        let mut a = TopoGraph::empty();
        a.push_vertex(Point2::new(0.0, 0.5), VertexKind::ContourCorner);
        a.push_vertex(Point2::new(0.0, 0.0), VertexKind::ContourCorner);
        a.push_vertex(Point2::new(2.0, 0.0), VertexKind::ContourCorner);
        a.push_vertex(Point2::new(2.0, 0.5), VertexKind::ContourCorner);
        let mut b = TopoGraph::empty();
        b.push_vertex(Point2::new(0.0, 0.45), VertexKind::ContourCorner);
        b.push_vertex(Point2::new(0.0, 2.0), VertexKind::ContourCorner);
        b.push_vertex(Point2::new(2.0, 2.0), VertexKind::ContourCorner);
        b.push_vertex(Point2::new(2.0, 0.45), VertexKind::ContourCorner);
        let merged = merge_topologies(&a, &b, 0.3, 0.3);
        assert_eq!(merged.vertices.len(), 6);
    }
}
