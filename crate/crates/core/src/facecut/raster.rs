//! Polygon rasterization with the even–odd rule.
//!
//! Cells are sampled at their centres, which sit at integer coordinates:
//! cell `(row r, col c)` has centre `(x=c, y=r)`. A centre strictly inside
//! the polygon (even–odd) is set, and a centre lying exactly on an edge is
//! set as well.
//!
//! Two routes compute the same predicate: [`build_face_mask`] runs a
//! scanline (per-row edge crossings, sorted, parity-filled, plus an on-edge
//! boundary pass) and [`point_in_polygon`] evaluates a single point
//! directly. The scanline is the production path; the per-point test is the
//! slow reference predicate the test suite compares against cell-for-cell.

use crate::error::{Error, Result};
use crate::facecut::BoundaryPath;
use crate::landmarks::Point2D;

/// Row-major binary grid with the source image's height × width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    grid: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            grid: vec![0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.grid[row * self.width + col] == 1
    }

    pub fn set(&mut self, row: usize, col: usize) {
        self.grid[row * self.width + col] = 1;
    }

    pub fn count_ones(&self) -> usize {
        self.grid.iter().map(|&v| v as usize).sum()
    }

    /// Tight bounding box of set cells as `(top, left, bottom, right)`,
    /// inclusive. `None` when the mask is empty.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let (mut top, mut left) = (usize::MAX, usize::MAX);
        let (mut bottom, mut right) = (0usize, 0usize);
        let mut any = false;
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    any = true;
                    top = top.min(r);
                    left = left.min(c);
                    bottom = bottom.max(r);
                    right = right.max(c);
                }
            }
        }
        any.then_some((top, left, bottom, right))
    }
}

/// Clamp polygon vertices into `[0, width-1] × [0, height-1]`.
fn clamp_vertices(path: &BoundaryPath, height: usize, width: usize) -> Vec<Point2D> {
    path.points()
        .iter()
        .map(|p| Point2D::new(p.x.clamp(0.0, (width - 1) as f64), p.y.clamp(0.0, (height - 1) as f64)))
        .collect()
}

fn count_distinct(points: &[Point2D]) -> usize {
    let mut distinct: Vec<Point2D> = Vec::with_capacity(points.len());
    for p in points {
        if !distinct.contains(p) {
            distinct.push(*p);
        }
    }
    distinct.len()
}

/// True when every vertex lies on one line (includes the all-equal case).
fn all_collinear(points: &[Point2D]) -> bool {
    let p0 = points[0];
    let Some(p1) = points.iter().find(|p| **p != p0) else {
        return true;
    };
    points
        .iter()
        .all(|q| (p1.x - p0.x) * (q.y - p0.y) - (p1.y - p0.y) * (q.x - p0.x) == 0.0)
}

fn check_degenerate(verts: &[Point2D]) -> Result<()> {
    if count_distinct(verts) < 3 {
        return Err(Error::DegeneratePolygon(format!(
            "{} distinct vertices after clamping, need at least 3",
            count_distinct(verts)
        )));
    }
    if all_collinear(verts) {
        return Err(Error::DegeneratePolygon(
            "vertices are collinear after clamping".into(),
        ));
    }
    Ok(())
}

/// Rasterize the boundary polygon onto a `height × width` grid.
///
/// Vertices are clamped to the image bounds before rasterization. Fewer than
/// three distinct vertices after clamping is a degenerate polygon.
pub fn build_face_mask(path: &BoundaryPath, height: usize, width: usize) -> Result<BinaryMask> {
    if height == 0 || width == 0 {
        return Err(Error::Shape("mask dimensions must be positive".into()));
    }
    let verts = clamp_vertices(path, height, width);
    check_degenerate(&verts)?;
    let mut mask = BinaryMask::zeros(height, width);
    scanline_fill(&verts, &mut mask);
    mark_boundary_cells(&verts, &mut mask);
    Ok(mask)
}

/// Crossing of the edge `p → q` with the horizontal line at `y`, under the
/// half-open rule `(p.y <= y) != (q.y <= y)`; horizontal edges never cross.
fn edge_crossing(p: Point2D, q: Point2D, y: f64) -> Option<f64> {
    if (p.y <= y) == (q.y <= y) {
        return None;
    }
    Some(p.x + (y - p.y) / (q.y - p.y) * (q.x - p.x))
}

fn scanline_fill(verts: &[Point2D], mask: &mut BinaryMask) {
    let n = verts.len();
    let mut crossings: Vec<f64> = Vec::with_capacity(n);
    for r in 0..mask.height {
        let y = r as f64;
        crossings.clear();
        for i in 0..n {
            if let Some(x) = edge_crossing(verts[i], verts[(i + 1) % n], y) {
                crossings.push(x);
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).expect("finite crossings"));
        // Parity fill between pairs, strictly inside: a < c < b. Centres
        // exactly on a crossing are boundary cells, handled separately.
        for pair in crossings.chunks_exact(2) {
            let (a, b) = (pair[0], pair[1]);
            let lo = (a.floor() as i64 + 1).max(0);
            let hi = (b.ceil() as i64 - 1).min(mask.width as i64 - 1);
            for c in lo..=hi {
                mask.set(r, c as usize);
            }
        }
    }
}

/// Exact test: is `(x, y)` on the closed segment `p → q`?
fn on_edge(x: f64, y: f64, p: Point2D, q: Point2D) -> bool {
    let cross = (q.x - p.x) * (y - p.y) - (q.y - p.y) * (x - p.x);
    cross == 0.0
        && x >= p.x.min(q.x)
        && x <= p.x.max(q.x)
        && y >= p.y.min(q.y)
        && y <= p.y.max(q.y)
}

/// Set every cell whose centre lies exactly on a polygon edge.
fn mark_boundary_cells(verts: &[Point2D], mask: &mut BinaryMask) {
    let n = verts.len();
    for i in 0..n {
        let p = verts[i];
        let q = verts[(i + 1) % n];
        let r0 = (p.y.min(q.y).ceil() as i64).max(0);
        let r1 = (p.y.max(q.y).floor() as i64).min(mask.height as i64 - 1);
        for r in r0..=r1 {
            let y = r as f64;
            // Candidate columns: near the crossing for steep edges, the whole
            // x-span for flat ones (a near-horizontal edge can pass exactly
            // through several centres in one row).
            let (c0, c1) = if (q.y - p.y).abs() >= 1.0 {
                let x = p.x + (y - p.y) / (q.y - p.y) * (q.x - p.x);
                (x.floor() as i64 - 2, x.ceil() as i64 + 2)
            } else {
                (p.x.min(q.x).floor() as i64, p.x.max(q.x).ceil() as i64)
            };
            for c in c0.max(0)..=c1.min(mask.width as i64 - 1) {
                if on_edge(c as f64, y, p, q) {
                    mask.set(r as usize, c as usize);
                }
            }
        }
    }
}

/// Even–odd point-in-polygon with inclusive boundary: returns true when the
/// point is strictly inside by crossing parity or lies exactly on an edge.
///
/// This is the slow per-point reference predicate; it shares no control flow
/// with the scanline fill.
pub fn point_in_polygon(x: f64, y: f64, verts: &[Point2D]) -> bool {
    let n = verts.len();
    for i in 0..n {
        if on_edge(x, y, verts[i], verts[(i + 1) % n]) {
            return true;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let p = verts[i];
        let q = verts[(i + 1) % n];
        if (p.y <= y) != (q.y <= y) {
            let xint = p.x + (y - p.y) / (q.y - p.y) * (q.x - p.x);
            if x < xint {
                inside = !inside;
            }
        }
    }
    inside
}

/// Brute-force rasterization: evaluate [`point_in_polygon`] at every cell
/// centre. Used by the test suite as the oracle for [`build_face_mask`].
pub fn rasterize_by_point_test(path: &BoundaryPath, height: usize, width: usize) -> Result<BinaryMask> {
    if height == 0 || width == 0 {
        return Err(Error::Shape("mask dimensions must be positive".into()));
    }
    let verts = clamp_vertices(path, height, width);
    check_degenerate(&verts)?;
    let mut mask = BinaryMask::zeros(height, width);
    for r in 0..height {
        for c in 0..width {
            if point_in_polygon(c as f64, r as f64, &verts) {
                mask.set(r, c);
            }
        }
    }
    Ok(mask)
}
