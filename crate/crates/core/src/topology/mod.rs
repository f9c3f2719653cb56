//! Strategic layer: scan rasterization, contour extraction, image-space
//! fusion of contours received from teammates, visibility-graph
//! construction and merging, and global route search.

use crate::geometry::Point2;

mod contour;
mod graph;
mod image;
mod route;

pub use contour::{
    component_sizes, douglas_peucker, find_contours, max_deviation, signed_area,
    simplify_contours,
};
pub use graph::{
    build_local_graph, merge_topologies, merge_topologies_with, segment_contour_clearance,
    segment_is_clear, GraphParams, MergePolicy, TopoGraph, TopoVertex, VertexKind,
};
pub use image::{
    bresenham_cells, fuse_maps, fuse_maps_into, project_to_image, project_to_image_filtered,
    BinaryImage,
};
pub use route::{plan_global_route, route_length, RouteError, SearchMode};

/// Closed obstacle boundary polylines in one robot's frame. Closure is
/// implicit: the last point connects back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSet {
    pub contours: Vec<Vec<Point2>>,
    pub frame_tag: String,
}

impl ContourSet {
    pub fn empty(frame_tag: &str) -> Self {
        Self {
            contours: Vec::new(),
            frame_tag: frame_tag.to_string(),
        }
    }

    pub fn total_points(&self) -> usize {
        self.contours.iter().map(Vec::len).sum()
    }
}
