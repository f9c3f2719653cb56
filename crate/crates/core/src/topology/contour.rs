//! Contour extraction by border following over 8-connected components,
//! and polyline simplification.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::geometry::Point2;

use super::{BinaryImage, ContourSet};

/// Neighbor ring in counter-clockwise order starting east.
const RING: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

fn ring_index(delta: (i64, i64)) -> usize {
    RING.iter().position(|&d| d == delta).expect("unit delta")
}

/// One border-following step: scan the neighbor ring counter-clockwise
/// starting just after the backtrack cell, returning the first occupied
/// neighbor and its new backtrack (the free cell scanned just before it).
fn trace_step(
    img: &BinaryImage,
    cur: (i64, i64),
    back: (i64, i64),
) -> Option<((i64, i64), (i64, i64))> {
    let start = ring_index((back.0 - cur.0, back.1 - cur.1));
    let mut prev_free = back;
    for k in 1..=8 {
        let d = RING[(start + k) % 8];
        let cand = (cur.0 + d.0, cur.1 + d.1);
        if img.is_occupied(cand) {
            return Some((cand, prev_free));
        }
        prev_free = cand;
    }
    None
}

/// Trace the outer boundary of the component containing `start` (its
/// lowest-then-leftmost cell). The result lists boundary cells in traversal
/// order; thin sections are legitimately visited twice.
fn trace_boundary(img: &BinaryImage, start: (i64, i64)) -> Vec<(i64, i64)> {
    let back0 = (start.0, start.1 - 1); // free: start is the lowest cell
    let first = match trace_step(img, start, back0) {
        Some(s) => s,
        None => return vec![start], // isolated cell
    };
    let mut cells = vec![first.0];
    let mut state = first;
    for _ in 0..(img.width() * img.height() * 4 + 16) {
        let next = trace_step(img, state.0, state.1).expect("connected boundary");
        if next == first {
            break;
        }
        cells.push(next.0);
        state = next;
    }
    cells
}

/// Extract one closed outer-boundary polyline per 8-connected occupied
/// component, vertices at cell centers in metric coordinates, oriented
/// counter-clockwise. Components smaller than `min_component_cells` are
/// dropped, as are components too small to form a 3-point boundary.
pub fn find_contours(img: &BinaryImage, min_component_cells: usize, frame_tag: &str) -> ContourSet {
    let occupied = img.occupied_cells();
    let occupied_set: BTreeSet<(i64, i64)> = occupied.iter().cloned().collect();
    let mut seen: BTreeSet<(i64, i64)> = BTreeSet::new();
    let mut contours = Vec::new();

    // Row-major over (y, x): the first unseen cell of a component is its
    // lowest-then-leftmost cell.
    let mut by_row: Vec<(i64, i64)> = occupied.clone();
    by_row.sort_by_key(|&(x, y)| (y, x));

    for &cell in &by_row {
        if seen.contains(&cell) {
            continue;
        }
        // Flood the component.
        let mut component = Vec::new();
        let mut queue = VecDeque::from([cell]);
        seen.insert(cell);
        while let Some(c) = queue.pop_front() {
            component.push(c);
            for d in RING {
                let n = (c.0 + d.0, c.1 + d.1);
                if occupied_set.contains(&n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        if component.len() < min_component_cells {
            continue;
        }
        let boundary = trace_boundary(img, cell);
        let mut points: Vec<Point2> = Vec::with_capacity(boundary.len());
        for c in boundary {
            let p = img.cell_center(c);
            if points.last().map(|l| l.distance(p) < 1e-12) != Some(true) {
                points.push(p);
            }
        }
        // Closing duplicate (closure is implicit).
        if points.len() > 1 && points[0].distance(*points.last().unwrap()) < 1e-12 {
            points.pop();
        }
        let distinct: BTreeSet<(i64, i64)> = points
            .iter()
            .map(|p| ((p.x * 1e6).round() as i64, (p.y * 1e6).round() as i64))
            .collect();
        if distinct.len() < 3 {
            continue;
        }
        if signed_area(&points) < 0.0 {
            points.reverse();
        }
        contours.push(points);
    }

    ContourSet {
        contours,
        frame_tag: frame_tag.to_string(),
    }
}

pub fn signed_area(points: &[Point2]) -> f64 {
    let n = points.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        acc += a.cross(b);
    }
    acc / 2.0
}

/// Open-polyline Douglas-Peucker: endpoints always survive; every removed
/// point lies within `epsilon` of the simplified chain.
pub fn douglas_peucker(points: &[Point2], epsilon: f64) -> Vec<Point2> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    let mut stack = vec![(0usize, points.len() - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (a, b) = (points[lo], points[hi]);
        let mut worst = 0.0;
        let mut worst_i = lo;
        for (i, p) in points.iter().enumerate().take(hi).skip(lo + 1) {
            let d = crate::geometry::point_segment_distance(*p, (a, b));
            if d > worst {
                worst = d;
                worst_i = i;
            }
        }
        if worst > epsilon {
            keep[worst_i] = true;
            stack.push((lo, worst_i));
            stack.push((worst_i, hi));
        }
    }
    points
        .iter()
        .zip(keep.iter())
        .filter_map(|(p, &k)| k.then_some(*p))
        .collect()
}

fn farthest_pair(points: &[Point2]) -> (usize, usize) {
    let mut best = (0, 0);
    let mut best_d = -1.0;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = points[i].distance(points[j]);
            if d > best_d {
                best_d = d;
                best = (i, j);
            }
        }
    }
    best
}

/// Simplify each closed contour. The contour is split at its two most
/// distant vertices and each half simplified independently, which keeps the
/// result closed. With `epsilon == 0` the input is returned verbatim.
/// Contours that cannot retain three vertices are dropped.
pub fn simplify_contours(raw: &ContourSet, epsilon: f64) -> ContourSet {
    assert!(epsilon >= 0.0);
    if epsilon == 0.0 {
        return raw.clone();
    }
    let mut contours = Vec::new();
    for contour in &raw.contours {
        if contour.len() < 3 {
            continue;
        }
        let (i, j) = farthest_pair(contour);
        // Rotate so the chain starts at i; split at j; close the second
        // half back to the first point.
        let rotated: Vec<Point2> = contour[i..].iter().chain(contour[..i].iter()).cloned().collect();
        let split = (j + contour.len() - i) % contour.len();
        let mut second: Vec<Point2> = rotated[split..].to_vec();
        second.push(rotated[0]);
        let mut simplified = douglas_peucker(&rotated[..=split], epsilon);
        let half_b = douglas_peucker(&second, epsilon);
        simplified.extend(half_b.iter().skip(1).take(half_b.len().saturating_sub(2)).cloned());
        if simplified.len() < 3 {
            // Degenerate straight contour: force-keep the interior point
            // farthest from the kept pair so walls survive as collinear
            // triples.
            let (a, b) = (rotated[0], rotated[split]);
            let mut best: Option<(f64, f64, Point2)> = None;
            for p in &rotated {
                let sep = p.distance(a).min(p.distance(b));
                if sep < 1e-9 {
                    continue;
                }
                let dev = crate::geometry::point_segment_distance(*p, (a, b));
                let better = match best {
                    None => true,
                    Some((bd, bs, _)) => dev > bd || (dev == bd && sep > bs),
                };
                if better {
                    best = Some((dev, sep, *p));
                }
            }
            match best {
                Some((_, _, w)) => simplified = vec![a, w, b],
                None => continue,
            }
        }
        contours.push(simplified);
    }
    ContourSet {
        contours,
        frame_tag: raw.frame_tag.clone(),
    }
}

/// Max distance from any input vertex to the simplified closed chain; used
/// by tests as the one-sided Hausdorff bound.
pub fn max_deviation(original: &[Point2], simplified: &[Point2]) -> f64 {
    let n = simplified.len();
    original
        .iter()
        .map(|p| {
            (0..n)
                .map(|i| {
                    crate::geometry::point_segment_distance(
                        *p,
                        (simplified[i], simplified[(i + 1) % n]),
                    )
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Component sizes keyed by lowest-then-leftmost cell; test support.
pub fn component_sizes(img: &BinaryImage) -> BTreeMap<(i64, i64), usize> {
    let occupied: BTreeSet<(i64, i64)> = img.occupied_cells().into_iter().collect();
    let mut seen = BTreeSet::new();
    let mut out = BTreeMap::new();
    for &cell in &occupied {
        if seen.contains(&cell) {
            continue;
        }
        let mut size = 0usize;
        let mut anchor = cell;
        let mut queue = VecDeque::from([cell]);
        seen.insert(cell);
        while let Some(c) = queue.pop_front() {
            size += 1;
            if (c.1, c.0) < (anchor.1, anchor.0) {
                anchor = c;
            }
            for d in RING {
                let n = (c.0 + d.0, c.1 + d.1);
                if occupied.contains(&n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        out.insert(anchor, size);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_from_cells(cells: &[(i64, i64)]) -> BinaryImage {
        let mut img = BinaryImage::new(0.1);
        for &c in cells {
            img.set(c);
        }
        img
    }

    #[test]
    fn empty_image_no_contours() {
        let img = BinaryImage::new(0.1);
        assert!(find_contours(&img, 4, "f").contours.is_empty());
    }

    #[test]
    fn block_contour_encloses_all_cells() {
        // 3x3 block: 8 boundary cells traced, center strictly inside.
        let cells: Vec<(i64, i64)> = (0..3)
            .flat_map(|x| (0..3).map(move |y| (x, y)))
            .collect();
        let img = image_from_cells(&cells);
        let cs = find_contours(&img, 4, "f");
        assert_eq!(cs.contours.len(), 1);
        let contour = &cs.contours[0];
        assert_eq!(contour.len(), 8);
        assert!(signed_area(contour) > 0.0);
        // Every boundary cell center lies on the contour.
        for &cell in &cells {
            let center = img.cell_center(cell);
            if cell == (1, 1) {
                assert!(point_in_polygon(center, contour));
            } else {
                assert!(contour.iter().any(|p| p.distance(center) < 1e-9));
            }
        }
    }

    fn point_in_polygon(p: Point2, poly: &[Point2]) -> bool {
        let mut inside = false;
        let n = poly.len();
        for i in 0..n {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    #[test]
    fn two_blocks_two_contours() {
        let mut cells = Vec::new();
        for x in 0..3 {
            for y in 0..3 {
                cells.push((x, y));
                cells.push((x + 10, y + 10));
            }
        }
        let img = image_from_cells(&cells);
        let cs = find_contours(&img, 4, "f");
        assert_eq!(cs.contours.len(), 2);
        for contour in &cs.contours {
            // 3x3 block boundary through cell centers encloses a 0.2 x 0.2
            // square; the cell-count area (9 * 0.01) exceeds it by at most a
            // one-cell perimeter band.
            let area = signed_area(contour).abs();
            assert!((area - 0.04).abs() < 1e-9);
            assert!(9.0 * 0.01 - area <= 8.5 * 0.01);
        }
    }

    #[test]
    fn thin_line_contour_survives() {
        let img = image_from_cells(&[(0, 0), (1, 0), (2, 0), (3, 0)]);
        let cs = find_contours(&img, 4, "f");
        assert_eq!(cs.contours.len(), 1);
        assert!(cs.contours[0].len() >= 3);
    }

    #[test]
    fn small_components_dropped() {
        let img = image_from_cells(&[(0, 0), (1, 0), (10, 10)]);
        let cs = find_contours(&img, 3, "f");
        assert!(cs.contours.is_empty());
    }

    #[test]
    fn simplify_epsilon_zero_verbatim() {
        let cs = ContourSet {
            contours: vec![vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.001),
                Point2::new(2.0, 0.0),
                Point2::new(1.0, 1.0),
            ]],
            frame_tag: "f".into(),
        };
        assert_eq!(simplify_contours(&cs, 0.0), cs);
    }

    #[test]
    fn collinear_chain_keeps_endpoints_only() {
        let chain: Vec<Point2> = (0..20).map(|i| Point2::new(i as f64 * 0.1, 0.0)).collect();
        let out = douglas_peucker(&chain, 0.05);
        assert_eq!(out, vec![chain[0], chain[19]]);
    }

    #[test]
    fn rasterized_square_simplifies_to_few_vertices() {
        // Dense boundary of a 2 m square, ~100 points.
        let mut pts = Vec::new();
        let n = 25;
        for i in 0..n {
            pts.push(Point2::new(2.0 * i as f64 / n as f64, 0.0));
        }
        for i in 0..n {
            pts.push(Point2::new(2.0, 2.0 * i as f64 / n as f64));
        }
        for i in 0..n {
            pts.push(Point2::new(2.0 - 2.0 * i as f64 / n as f64, 2.0));
        }
        for i in 0..n {
            pts.push(Point2::new(0.0, 2.0 - 2.0 * i as f64 / n as f64));
        }
        let cs = ContourSet {
            contours: vec![pts.clone()],
            frame_tag: "f".into(),
        };
        let out = simplify_contours(&cs, 0.15);
        assert_eq!(out.contours.len(), 1);
        let simplified = &out.contours[0];
        assert!(
            (4..=8).contains(&simplified.len()),
            "got {} vertices",
            simplified.len()
        );
        assert!(max_deviation(&pts, simplified) <= 0.15 + 1e-9);
    }

    #[test]
    fn straight_wall_survives_simplification() {
        let img = image_from_cells(&[(0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (5, 0)]);
        let cs = find_contours(&img, 4, "f");
        let out = simplify_contours(&cs, 0.15);
        assert_eq!(out.contours.len(), 1);
        assert!(out.contours[0].len() >= 3);
        // endpoints preserved
        let xs: Vec<f64> = out.contours[0].iter().map(|p| p.x).collect();
        assert!(xs.iter().cloned().fold(f64::INFINITY, f64::min) < 0.06);
        assert!(xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > 0.54);
    }
}
