//! Metric local grid: occupancy cropped from the fused map image, an exact
//! Euclidean distance field, and 8-connected A* search over it.

use std::collections::BinaryHeap;

use thiserror::Error;

use crate::geometry::Point2;
use crate::topology::BinaryImage;

const FAR: f64 = 1e18;

/// Occupancy plus per-cell Euclidean distance (meters, center-to-center)
/// to the nearest occupied cell. Cells outside the crop count as free.
#[derive(Debug, Clone)]
pub struct LocalGrid {
    resolution: f64,
    origin_cell: (i64, i64),
    width: usize,
    height: usize,
    occupancy: Vec<bool>,
    distance_field: Vec<f64>,
}

/// One-dimensional squared distance transform (lower envelope of
/// parabolas).
fn dt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    if n == 0 {
        return Vec::new();
    }
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let sq = |i: usize| (i * i) as f64;
        let mut s = ((f[q] + sq(q)) - (f[v[k]] + sq(v[k]))) / (2.0 * (q - v[k]) as f64);
        while s <= z[k] {
            k -= 1;
            s = ((f[q] + sq(q)) - (f[v[k]] + sq(v[k]))) / (2.0 * (q - v[k]) as f64);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        d[q] = dq * dq + f[v[k]];
    }
    d
}

impl LocalGrid {
    /// Crop a window of `radius` around `center` out of the map image and
    /// compute its distance field.
    pub fn from_image(image: &BinaryImage, center: Point2, radius: f64) -> Self {
        let res = image.resolution();
        let r_cells = (radius / res).ceil() as i64;
        let c = image.cell_of(center);
        let origin_cell = (c.0 - r_cells, c.1 - r_cells);
        let side = (2 * r_cells + 1) as usize;
        let mut occupancy = vec![false; side * side];
        for ly in 0..side {
            for lx in 0..side {
                let cell = (origin_cell.0 + lx as i64, origin_cell.1 + ly as i64);
                occupancy[ly * side + lx] = image.is_occupied(cell);
            }
        }
        Self::from_occupancy(res, origin_cell, side, side, occupancy)
    }

    pub fn from_occupancy(
        resolution: f64,
        origin_cell: (i64, i64),
        width: usize,
        height: usize,
        occupancy: Vec<bool>,
    ) -> Self {
        assert_eq!(occupancy.len(), width * height);
        // Squared distances row-wise then column-wise.
        let mut work: Vec<f64> = occupancy.iter().map(|&o| if o { 0.0 } else { FAR }).collect();
        for y in 0..height {
            let row = dt_1d(&work[y * width..(y + 1) * width]);
            work[y * width..(y + 1) * width].copy_from_slice(&row);
        }
        let mut col = vec![0.0; height];
        let mut distance_field = vec![0.0; width * height];
        for x in 0..width {
            for y in 0..height {
                col[y] = work[y * width + x];
            }
            let out = dt_1d(&col);
            for y in 0..height {
                let d2 = out[y];
                distance_field[y * width + x] = if d2 >= FAR { f64::INFINITY } else { d2.sqrt() * resolution };
            }
        }
        Self {
            resolution,
            origin_cell,
            width,
            height,
            occupancy,
            distance_field,
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

    fn local_index(&self, cell: (i64, i64)) -> Option<usize> {
        let lx = cell.0 - self.origin_cell.0;
        let ly = cell.1 - self.origin_cell.1;
        if lx < 0 || ly < 0 || lx >= self.width as i64 || ly >= self.height as i64 {
            None
        } else {
            Some(ly as usize * self.width + lx as usize)
        }
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

    pub fn contains(&self, p: Point2) -> bool {
        self.local_index(self.cell_of(p)).is_some()
    }

    pub fn is_occupied(&self, cell: (i64, i64)) -> bool {
        self.local_index(cell).map(|i| self.occupancy[i]).unwrap_or(false)
    }

    /// Distance field at the cell containing `p`; +inf outside the crop or
    /// when the crop holds no occupied cell.
    pub fn clearance_at(&self, p: Point2) -> f64 {
        self.local_index(self.cell_of(p))
            .map(|i| self.distance_field[i])
            .unwrap_or(f64::INFINITY)
    }

    pub fn distance_at_cell(&self, cell: (i64, i64)) -> f64 {
        self.local_index(cell).map(|i| self.distance_field[i]).unwrap_or(f64::INFINITY)
    }

    /// C1 interpolation of the distance field (smoothstep-weighted
    /// bilinear over cell centers) with its spatial gradient. Outside the
    /// crop the field is flat at +inf clamped to the boundary values.
    pub fn interpolate_clearance(&self, p: Point2) -> (f64, Point2) {
        if self.width == 0 || self.height == 0 {
            return (f64::INFINITY, Point2::default());
        }
        let gx = (p.x / self.resolution - 0.5) - self.origin_cell.0 as f64;
        let gy = (p.y / self.resolution - 0.5) - self.origin_cell.1 as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let cx = gx.clamp(0.0, max_x - 1e-9);
        let cy = gy.clamp(0.0, max_y - 1e-9);
        let ix = cx.floor().min(max_x - 1.0).max(0.0);
        let iy = cy.floor().min(max_y - 1.0).max(0.0);
        let fx = (cx - ix).clamp(0.0, 1.0);
        let fy = (cy - iy).clamp(0.0, 1.0);
        let (ix, iy) = (ix as usize, iy as usize);
        let f = |x: usize, y: usize| {
            let v = self.distance_field[y * self.width + x];
            // A crop with no obstacles reports a huge but finite value so
            // interpolation stays well-defined.
            v.min(1e6)
        };
        let f00 = f(ix, iy);
        let f10 = f(ix + 1, iy);
        let f01 = f(ix, iy + 1);
        let f11 = f(ix + 1, iy + 1);
        let sm = |t: f64| t * t * (3.0 - 2.0 * t);
        let dsm = |t: f64| 6.0 * t * (1.0 - t);
        let wx = sm(fx);
        let wy = sm(fy);
        let value = f00 * (1.0 - wx) * (1.0 - wy)
            + f10 * wx * (1.0 - wy)
            + f01 * (1.0 - wx) * wy
            + f11 * wx * wy;
        let inside_x = gx > 0.0 && gx < max_x;
        let inside_y = gy > 0.0 && gy < max_y;
        let ddx = if inside_x {
            dsm(fx) / self.resolution * ((f10 - f00) * (1.0 - wy) + (f11 - f01) * wy)
        } else {
            0.0
        };
        let ddy = if inside_y {
            dsm(fy) / self.resolution * ((f01 - f00) * (1.0 - wx) + (f11 - f10) * wx)
        } else {
            0.0
        };
        (value, Point2::new(ddx, ddy))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("start cell is blocked")]
    StartBlocked,
    #[error("goal cell is blocked")]
    GoalBlocked,
    #[error("goal unreachable on the local grid")]
    Unreachable,
}

#[derive(Debug, Clone)]
pub struct GridPath {
    pub points: Vec<Point2>,
    pub cost: f64,
}

#[derive(PartialEq)]
struct AstarEntry {
    f: f64,
    h: f64,
    idx: usize,
}

impl Eq for AstarEntry {}

impl Ord for AstarEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(other.h.total_cmp(&self.h))
            .then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for AstarEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Cost-optimal 8-connected grid path. Cells closer to obstacles than
/// `safety_radius` are blocked; the start cell is exempt so a robot pressed
/// against the safety band can still plan its way out.
pub fn astar_plan(
    grid: &LocalGrid,
    from: Point2,
    to: Point2,
    safety_radius: f64,
) -> Result<GridPath, PlanError> {
    let res = grid.resolution;
    let start = grid.cell_of(from);
    let goal = grid.cell_of(to);
    let start_idx = grid.local_index(start).ok_or(PlanError::StartBlocked)?;
    let goal_idx = grid.local_index(goal).ok_or(PlanError::GoalBlocked)?;
    let blocked = |idx: usize| grid.occupancy[idx] || grid.distance_field[idx] < safety_radius;
    if blocked(start_idx) && grid.occupancy[start_idx] {
        return Err(PlanError::StartBlocked);
    }
    if blocked(goal_idx) {
        return Err(PlanError::GoalBlocked);
    }
    if start == goal {
        return Ok(GridPath {
            points: vec![from],
            cost: 0.0,
        });
    }

    let w = grid.width as i64;
    let h = grid.height as i64;
    let octile = |idx: usize| -> f64 {
        let dx = ((idx % grid.width) as i64 - (goal_idx % grid.width) as i64).abs() as f64;
        let dy = ((idx / grid.width) as i64 - (goal_idx / grid.width) as i64).abs() as f64;
        res * (dx.max(dy) + (std::f64::consts::SQRT_2 - 1.0) * dx.min(dy))
    };

    let mut g = vec![f64::INFINITY; grid.occupancy.len()];
    let mut came: Vec<usize> = vec![usize::MAX; grid.occupancy.len()];
    let mut heap = BinaryHeap::new();
    g[start_idx] = 0.0;
    heap.push(AstarEntry {
        f: octile(start_idx),
        h: octile(start_idx),
        idx: start_idx,
    });
    const STEPS: [(i64, i64); 8] = [
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (1, 1),
        (1, -1),
        (-1, 1),
        (-1, -1),
    ];
    while let Some(AstarEntry { f, idx, .. }) = heap.pop() {
        if idx == goal_idx {
            break;
        }
        if f > g[idx] + octile(idx) + 1e-12 {
            continue;
        }
        let x = (idx % grid.width) as i64;
        let y = (idx / grid.width) as i64;
        for (dx, dy) in STEPS {
            let nx = x + dx;
            let ny = y + dy;
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                continue;
            }
            let nidx = (ny * w + nx) as usize;
            if blocked(nidx) {
                continue;
            }
            let step = if dx != 0 && dy != 0 {
                res * std::f64::consts::SQRT_2
            } else {
                res
            };
            let cand = g[idx] + step;
            if cand < g[nidx] - 1e-12 {
                g[nidx] = cand;
                came[nidx] = idx;
                let hh = octile(nidx);
                heap.push(AstarEntry {
                    f: cand + hh,
                    h: hh,
                    idx: nidx,
                });
            }
        }
    }
    if !g[goal_idx].is_finite() {
        return Err(PlanError::Unreachable);
    }
    let mut cells = vec![goal_idx];
    let mut cur = goal_idx;
    while cur != start_idx {
        cur = came[cur];
        cells.push(cur);
    }
    cells.reverse();
    let mut points: Vec<Point2> = cells
        .iter()
        .map(|&idx| {
            let cell = (
                grid.origin_cell.0 + (idx % grid.width) as i64,
                grid.origin_cell.1 + (idx / grid.width) as i64,
            );
            grid.cell_center(cell)
        })
        .collect();
    // Anchor the endpoints at the exact query points.
    points[0] = from;
    let n = points.len();
    points[n - 1] = to;
    Ok(GridPath {
        points,
        cost: g[goal_idx],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_from_rows(rows: &[&str]) -> LocalGrid {
        // '#' occupied, '.' free; row 0 is the bottom (y = 0).
        let height = rows.len();
        let width = rows[0].len();
        let mut occ = vec![false; width * height];
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                occ[y * width + x] = ch == '#';
            }
        }
        LocalGrid::from_occupancy(1.0, (0, 0), width, height, occ)
    }

    #[test]
    fn distance_field_matches_brute_force() {
        let grid = grid_from_rows(&[
            "..........",
            "...##.....",
            "...##.....",
            ".........#",
            "..........",
        ]);
        let occupied: Vec<(i64, i64)> = (0..10)
            .flat_map(|x| (0..5).map(move |y| (x, y)))
            .filter(|&c| grid.is_occupied(c))
            .collect();
        for x in 0..10 {
            for y in 0..5 {
                let brute = occupied
                    .iter()
                    .map(|&(ox, oy)| {
                        (((ox - x) * (ox - x) + (oy - y) * (oy - y)) as f64).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min);
                let field = grid.distance_at_cell((x, y));
                assert!(
                    (field - brute).abs() < 1e-9,
                    "cell ({x},{y}): field {field} brute {brute}"
                );
            }
        }
    }

    #[test]
    fn astar_straight_line_cost() {
        let grid = grid_from_rows(&["............", "............", "............"]);
        let path = astar_plan(
            &grid,
            Point2::new(0.5, 1.5),
            Point2::new(10.5, 1.5),
            0.0,
        )
        .unwrap();
        assert!((path.cost - 10.0).abs() < 1e-9);
    }

    #[test]
    fn astar_single_point_when_same_cell() {
        let grid = grid_from_rows(&["....", "....", "...."]);
        let path = astar_plan(&grid, Point2::new(1.2, 1.2), Point2::new(1.4, 1.3), 0.0).unwrap();
        assert_eq!(path.points.len(), 1);
        assert_eq!(path.cost, 0.0);
    }

    #[test]
    fn astar_goes_through_gap() {
        let grid = grid_from_rows(&[
            "..........",
            "####.#####",
            "..........",
        ]);
        let path = astar_plan(&grid, Point2::new(2.5, 0.5), Point2::new(2.5, 2.5), 0.0).unwrap();
        // Must route through the gap at x = 4.
        assert!(path
            .points
            .iter()
            .any(|p| (p.x - 4.5).abs() < 0.6 && (p.y - 1.5).abs() < 0.6));
    }

    #[test]
    fn astar_blocked_goal_errors() {
        let grid = grid_from_rows(&["....", ".#..", "...."]);
        let err = astar_plan(&grid, Point2::new(0.5, 0.5), Point2::new(1.5, 1.5), 0.0).unwrap_err();
        assert_eq!(err, PlanError::GoalBlocked);
    }

    #[test]
    fn astar_unreachable_errors() {
        let grid = grid_from_rows(&[
            ".....#....",
            ".....#....",
            ".....#....",
        ]);
        let err = astar_plan(&grid, Point2::new(0.5, 0.5), Point2::new(9.5, 0.5), 0.0).unwrap_err();
        assert_eq!(err, PlanError::Unreachable);
    }

    #[test]
    fn interpolated_clearance_is_continuous() {
        let grid = grid_from_rows(&[
            "..........",
            "....##....",
            "..........",
            "..........",
        ]);
        // Walk a line and check small steps never jump.
        let mut prev = None;
        for i in 0..200 {
            let p = Point2::new(1.0 + 0.04 * i as f64, 2.6);
            let (v, _) = grid.interpolate_clearance(p);
            if let Some(pv) = prev {
                let dv: f64 = v - pv;
                assert!(dv.abs() < 0.2, "jump of {dv} at {p:?}");
            }
            prev = Some(v);
        }
    }
}
