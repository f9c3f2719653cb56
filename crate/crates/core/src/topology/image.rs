//! Growable occupancy bitmap anchored to a fixed lattice of the owning
//! robot's frame, plus scan projection and contour rasterization.

use crate::geometry::{FrameTransform, Point2};
use crate::world::LidarScan;

use super::ContourSet;

/// Binary occupancy image. Cell (0, 0) of the local bitmap sits at
/// `origin_cell` on the global lattice `floor(p / resolution)`, so the grid
/// never shifts as the image grows.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryImage {
    resolution: f64,
    origin_cell: (i64, i64),
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryImage {
    pub fn new(resolution: f64) -> Self {
        assert!(resolution > 0.0);
        Self {
            resolution,
            origin_cell: (0, 0),
            width: 0,
            height: 0,
            bits: Vec::new(),
        }
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Metric anchor of local cell (0, 0): its lower-left corner.
    pub fn origin(&self) -> Point2 {
        Point2::new(
            self.origin_cell.0 as f64 * self.resolution,
            self.origin_cell.1 as f64 * self.resolution,
        )
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn cell_of(&self, p: Point2) -> (i64, i64) {
        (
            (p.x / self.resolution).floor() as i64,
            (p.y / self.resolution).floor() as i64,
        )
    }

    pub fn cell_center(&self, cell: (i64, i64)) -> Point2 {
        Point2::new(
            (cell.0 as f64 + 0.5) * self.resolution,
            (cell.1 as f64 + 0.5) * self.resolution,
        )
    }

    fn index(&self, cell: (i64, i64)) -> Option<usize> {
        let lx = cell.0 - self.origin_cell.0;
        let ly = cell.1 - self.origin_cell.1;
        if lx < 0 || ly < 0 || lx >= self.width as i64 || ly >= self.height as i64 {
            None
        } else {
            Some(ly as usize * self.width + lx as usize)
        }
    }

    pub fn is_occupied(&self, cell: (i64, i64)) -> bool {
        self.index(cell).map(|i| self.bits[i]).unwrap_or(false)
    }

    pub fn is_occupied_at(&self, p: Point2) -> bool {
        self.is_occupied(self.cell_of(p))
    }

    /// Grow the bitmap so `cell` fits; grows in whole-row/column blocks to
    /// amortize reallocation.
    fn grow_to(&mut self, cell: (i64, i64)) {
        if self.index(cell).is_some() {
            return;
        }
        const PAD: i64 = 16;
        let (mut min_x, mut min_y) = self.origin_cell;
        let (mut max_x, mut max_y) = (
            self.origin_cell.0 + self.width as i64,
            self.origin_cell.1 + self.height as i64,
        );
        if self.width == 0 || self.height == 0 {
            min_x = cell.0 - PAD;
            min_y = cell.1 - PAD;
            max_x = cell.0 + PAD + 1;
            max_y = cell.1 + PAD + 1;
        } else {
            if cell.0 < min_x {
                min_x = cell.0 - PAD;
            }
            if cell.1 < min_y {
                min_y = cell.1 - PAD;
            }
            if cell.0 >= max_x {
                max_x = cell.0 + PAD + 1;
            }
            if cell.1 >= max_y {
                max_y = cell.1 + PAD + 1;
            }
        }
        let new_w = (max_x - min_x) as usize;
        let new_h = (max_y - min_y) as usize;
        let mut bits = vec![false; new_w * new_h];
        for ly in 0..self.height {
            let gy = self.origin_cell.1 + ly as i64;
            let row = (gy - min_y) as usize;
            for lx in 0..self.width {
                if self.bits[ly * self.width + lx] {
                    let gx = self.origin_cell.0 + lx as i64;
                    bits[row * new_w + (gx - min_x) as usize] = true;
                }
            }
        }
        self.origin_cell = (min_x, min_y);
        self.width = new_w;
        self.height = new_h;
        self.bits = bits;
    }

    pub fn set(&mut self, cell: (i64, i64)) {
        self.grow_to(cell);
        let i = self.index(cell).expect("grown");
        self.bits[i] = true;
    }

    pub fn set_at(&mut self, p: Point2) {
        self.set(self.cell_of(p));
    }

    /// Occupied cells on the global lattice, row-major (y, then x).
    pub fn occupied_cells(&self) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        for ly in 0..self.height {
            for lx in 0..self.width {
                if self.bits[ly * self.width + lx] {
                    out.push((
                        self.origin_cell.0 + lx as i64,
                        self.origin_cell.1 + ly as i64,
                    ));
                }
            }
        }
        out
    }

    pub fn occupied_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Project beam endpoints into a fresh occupancy image. Beams at max range
/// hit nothing and leave no mark.
pub fn project_to_image(scan: &LidarScan, resolution: f64) -> BinaryImage {
    project_to_image_filtered(scan, resolution, &[])
}

/// Like [`project_to_image`] but suppressing hits inside exclusion discs
/// (known teammate bodies are not static obstacles).
pub fn project_to_image_filtered(
    scan: &LidarScan,
    resolution: f64,
    exclusions: &[(Point2, f64)],
) -> BinaryImage {
    let mut img = BinaryImage::new(resolution);
    for i in 0..scan.ranges.len() {
        if let Some(p) = scan.hit_point(i) {
            if exclusions.iter().any(|(c, r)| p.distance(*c) <= *r) {
                continue;
            }
            img.set_at(p);
        }
    }
    img
}

/// Integer Bresenham between two lattice cells, visiting every step cell.
pub fn bresenham_cells(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x0, mut y0) = a;
    let (x1, y1) = b;
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut cells = Vec::with_capacity((dx - dy) as usize + 1);
    loop {
        cells.push((x0, y0));
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
    cells
}

/// Rasterize contour boundaries (interiors untouched) into a copy of the
/// accumulator. `transform` maps incoming coordinates into the accumulator
/// frame; previously set cells are preserved and the image grows on demand.
pub fn fuse_maps(
    accumulator: &BinaryImage,
    incoming: &ContourSet,
    transform: &FrameTransform,
) -> BinaryImage {
    let mut out = accumulator.clone();
    fuse_maps_into(&mut out, incoming, transform);
    out
}

pub fn fuse_maps_into(
    accumulator: &mut BinaryImage,
    incoming: &ContourSet,
    transform: &FrameTransform,
) {
    for contour in &incoming.contours {
        let n = contour.len();
        if n == 0 {
            continue;
        }
        let cells: Vec<(i64, i64)> = contour
            .iter()
            .map(|p| accumulator.cell_of(transform.apply(*p)))
            .collect();
        for i in 0..n {
            let a = cells[i];
            let b = cells[(i + 1) % n];
            for cell in bresenham_cells(a, b) {
                accumulator.set(cell);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;

    #[test]
    fn empty_scan_makes_empty_image() {
        let scan = LidarScan {
            origin_pose: Pose2::identity(),
            ranges: (0..36)
                .map(|k| (std::f64::consts::TAU * k as f64 / 36.0, 4.0))
                .collect(),
            max_range: 4.0,
        };
        let img = project_to_image(&scan, 0.1);
        assert!(img.is_empty());
    }

    #[test]
    fn single_hit_marks_exactly_one_cell() {
        let scan = LidarScan {
            origin_pose: Pose2::identity(),
            ranges: vec![(0.0, 1.0), (1.0, 4.0)],
            max_range: 4.0,
        };
        let img = project_to_image(&scan, 0.1);
        let cells = img.occupied_cells();
        assert_eq!(cells, vec![(10, 0)]); // covers [1.0, 1.1) x [0.0, 0.1)
    }

    #[test]
    fn image_grows_without_moving_cells() {
        let mut img = BinaryImage::new(0.1);
        img.set_at(Point2::new(0.05, 0.05));
        img.set_at(Point2::new(-5.0, 7.0));
        assert!(img.is_occupied_at(Point2::new(0.05, 0.05)));
        assert!(img.is_occupied_at(Point2::new(-5.0, 7.0)));
        assert_eq!(img.occupied_count(), 2);
    }

    #[test]
    fn fuse_empty_is_identity() {
        let mut acc = BinaryImage::new(0.1);
        acc.set_at(Point2::new(1.0, 1.0));
        let fused = fuse_maps(
            &acc,
            &ContourSet::empty("t"),
            &FrameTransform::identity(),
        );
        assert_eq!(fused, acc);
    }

    #[test]
    fn fuse_twice_is_idempotent() {
        let acc = BinaryImage::new(0.1);
        let contours = ContourSet {
            contours: vec![vec![
                Point2::new(0.05, 0.05),
                Point2::new(1.05, 0.05),
                Point2::new(1.05, 1.05),
                Point2::new(0.05, 1.05),
            ]],
            frame_tag: "t".into(),
        };
        let once = fuse_maps(&acc, &contours, &FrameTransform::identity());
        let twice = fuse_maps(&once, &contours, &FrameTransform::identity());
        assert_eq!(once, twice);
    }

    #[test]
    fn bresenham_endpoints_and_connectivity() {
        let cells = bresenham_cells((0, 0), (5, 2));
        assert_eq!(*cells.first().unwrap(), (0, 0));
        assert_eq!(*cells.last().unwrap(), (5, 2));
        for w in cells.windows(2) {
            assert!((w[0].0 - w[1].0).abs() <= 1 && (w[0].1 - w[1].1).abs() <= 1);
        }
    }
}
