//! Boundary-dependent face cut: select the 27-point face boundary from a
//! landmark set, rasterize it to a binary mask, and cut the face region out
//! of the image.

mod cut;
mod raster;

pub use cut::{apply_cut, cut_face, render_boundary_overlay, CutImage, CutOptions, FaceCutOutcome,
              FacePolicy, NoFacePolicy};
pub use raster::{build_face_mask, point_in_polygon, rasterize_by_point_test, BinaryMask};

use crate::landmarks::{LandmarkSet, Point2D};

/// The ordered, closed face-boundary polygon.
///
/// In default mode the path visits jaw points 1..=16, left brow 26..=22
/// reversed, the nasion (point 27) as the connecting point between the brows,
/// then right brow 21..=17 reversed, closing implicitly back to the first jaw
/// point — 27 vertices. Enabling point zero prepends jaw point 0 for 28.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPath {
    indices: Vec<usize>,
    points: Vec<Point2D>,
}

impl BoundaryPath {
    /// Build a path from explicit vertices. Intended for tests and for mask
    /// construction from synthetic polygons; `select_boundary_points` is the
    /// production route.
    pub fn from_points(points: Vec<Point2D>) -> Self {
        let indices = (0..points.len()).collect();
        Self { indices, points }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn points(&self) -> &[Point2D] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True when no two non-adjacent edges of the closed polygon intersect
    /// and adjacent edges meet only at their shared endpoint. Pairwise
    /// O(n²) segment-intersection check.
    pub fn is_simple(&self) -> bool {
        let pts = &self.points;
        let n = pts.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            let a1 = pts[i];
            let a2 = pts[(i + 1) % n];
            for j in (i + 1)..n {
                let b1 = pts[j];
                let b2 = pts[(j + 1) % n];
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // Sharing one endpoint is expected; any further overlap
                    // (collinear overlap or passing through) is not.
                    if segments_overlap_beyond_endpoint(a1, a2, b1, b2) {
                        return false;
                    }
                } else if segments_intersect(a1, a2, b1, b2) {
                    return false;
                }
            }
        }
        true
    }
}

/// Pick the face-boundary landmarks in traversal order.
pub fn select_boundary_points(landmarks: &LandmarkSet, include_point_zero: bool) -> BoundaryPath {
    let mut indices: Vec<usize> = Vec::with_capacity(28);
    let jaw_start = if include_point_zero { 0 } else { 1 };
    indices.extend(jaw_start..=16);
    indices.extend((22..=26).rev());
    indices.push(27);
    indices.extend((17..=21).rev());
    let points = indices.iter().map(|&i| landmarks.point(i)).collect();
    BoundaryPath { indices, points }
}

fn cross(o: Point2D, a: Point2D, b: Point2D) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: Point2D, q: Point2D, r: Point2D) -> bool {
    // q collinear with p-r and within its bounding box.
    cross(p, r, q) == 0.0
        && q.x >= p.x.min(r.x)
        && q.x <= p.x.max(r.x)
        && q.y >= p.y.min(r.y)
        && q.y <= p.y.max(r.y)
}

/// Closed-segment intersection test (touching counts).
fn segments_intersect(p1: Point2D, p2: Point2D, q1: Point2D, q2: Point2D) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, p1, q2))
        || (d2 == 0.0 && on_segment(q1, p2, q2))
        || (d3 == 0.0 && on_segment(p1, q1, p2))
        || (d4 == 0.0 && on_segment(p1, q2, p2))
}

/// For edges sharing exactly one endpoint: detect overlap past that point.
fn segments_overlap_beyond_endpoint(a1: Point2D, a2: Point2D, b1: Point2D, b2: Point2D) -> bool {
    // Consecutive edges a1->a2, b1->b2 with a2 == b1 (or wrapping a1 == b2).
    let (shared, tail_a, tail_b) = if a2 == b1 {
        (a2, a1, b2)
    } else if a1 == b2 {
        (a1, a2, b1)
    } else {
        // Degenerate landmark sets can collapse vertices; fall back to the
        // general test.
        return segments_intersect(a1, a2, b1, b2);
    };
    // Collinear and pointing the same way out of the shared vertex.
    cross(shared, tail_a, tail_b) == 0.0
        && (tail_a.x - shared.x) * (tail_b.x - shared.x)
            + (tail_a.y - shared.y) * (tail_b.y - shared.y)
            > 0.0
}
