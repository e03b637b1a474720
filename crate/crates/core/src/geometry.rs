//! Exact geometry on simple polygons.
//!
//! Areas use the shoelace formula. Intersection areas are computed by ear-clipping
//! both operands into triangles and clipping every triangle pair against each other
//! (Sutherland-Hodgman on convex pieces), which stays correct for concave inputs.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Area below which a polygon (or a union of two) is considered degenerate, in pixels².
pub const EPSILON_AREA: f64 = 1e-6;

/// Tolerance applied to orientation (cross product) tests.
pub const EPSILON_CROSS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("vertices {0} and {1} are identical")]
    DuplicateVertex(usize, usize),
    #[error("non-simple polygon ({0:?} operand)")]
    NonSimpleInput(Operand),
    #[error("degenerate input: union area {0} is below {EPSILON_AREA}")]
    DegenerateInput(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point::new(x, y)
    }
}

/// `(b - a) × (c - a)`; positive when `a, b, c` turn counter-clockwise (y up).
#[inline]
pub fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

#[inline]
fn sign(v: f64) -> i8 {
    if v > EPSILON_CROSS {
        1
    } else if v < -EPSILON_CROSS {
        -1
    } else {
        0
    }
}

/// Axis-aligned rectangle, inclusive of its boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AARect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl AARect {
    /// Builds a rectangle, returning `None` when the bounds are inverted or not finite.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Option<Self> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        (finite && x_min <= x_max && y_min <= y_max).then_some(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Corners in the order top-left, top-right, bottom-right, bottom-left (image axes).
    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x_min, self.y_min),
            Point::new(self.x_max, self.y_min),
            Point::new(self.x_max, self.y_max),
            Point::new(self.x_min, self.y_max),
        ]
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    fn overlaps(&self, o: &AARect) -> bool {
        self.x_min < o.x_max && o.x_min < self.x_max && self.y_min < o.y_max && o.y_min < self.y_max
    }

    /// Plain rectangle IoU; 0 when the union is empty.
    pub fn iou(&self, o: &AARect) -> f64 {
        let w = (self.x_max.min(o.x_max) - self.x_min.max(o.x_min)).max(0.0);
        let h = (self.y_max.min(o.y_max) - self.y_min.max(o.y_min)).max(0.0);
        let inter = w * h;
        let union = self.area() + o.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// An ordered ring of at least three finite vertices with no repeated consecutive vertex.
///
/// The ring is implicitly closed; the last vertex connects back to the first.
/// Winding may be either direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        for i in 0..n {
            let j = (i + 1) % n;
            if vertices[i] == vertices[j] {
                return Err(GeometryError::DuplicateVertex(i, j));
            }
        }
        Ok(Self { vertices })
    }

    pub fn from_coords(coords: &[(f64, f64)]) -> Result<Self, GeometryError> {
        Self::new(coords.iter().map(|&c| c.into()).collect())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Applies `f` to every vertex. Fails if the result violates the polygon invariants.
    pub fn map(&self, f: impl Fn(Point) -> Point) -> Result<Self, GeometryError> {
        Self::new(self.vertices.iter().map(|&p| f(p)).collect())
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self, GeometryError> {
        self.map(|p| Point::new(p.x + dx, p.y + dy))
    }
}

impl<'de> Deserialize<'de> for Polygon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let vertices = Vec::<Point>::deserialize(d)?;
        Polygon::new(vertices).map_err(serde::de::Error::custom)
    }
}

fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    s * 0.5
}

pub fn circumscribed_rect(p: &Polygon) -> AARect {
    bounds(p.vertices())
}

fn bounds(pts: &[Point]) -> AARect {
    let mut r = AARect {
        x_min: f64::INFINITY,
        y_min: f64::INFINITY,
        x_max: f64::NEG_INFINITY,
        y_max: f64::NEG_INFINITY,
    };
    for p in pts {
        r.x_min = r.x_min.min(p.x);
        r.y_min = r.y_min.min(p.y);
        r.x_max = r.x_max.max(p.x);
        r.y_max = r.y_max.max(p.y);
    }
    r
}

/// Unsigned shoelace area.
pub fn polygon_area(p: &Polygon) -> f64 {
    signed_area(p.vertices()).abs()
}

/// `q` lies within the bounding box of segment `a-b`; only meaningful when collinear.
fn within_box(a: Point, b: Point, q: Point) -> bool {
    q.x >= a.x.min(b.x) && q.x <= a.x.max(b.x) && q.y >= a.y.min(b.y) && q.y <= a.y.max(b.y)
}

/// Closed-segment intersection test, touching included.
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = sign(cross(q1, q2, p1));
    let d2 = sign(cross(q1, q2, p2));
    let d3 = sign(cross(p1, p2, q1));
    let d4 = sign(cross(p1, p2, q2));
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && within_box(q1, q2, p1))
        || (d2 == 0 && within_box(q1, q2, p2))
        || (d3 == 0 && within_box(p1, p2, q1))
        || (d4 == 0 && within_box(p1, p2, q2))
}

/// True when no two edges meet except consecutive edges at their shared vertex,
/// and the enclosed area exceeds [`EPSILON_AREA`].
pub fn is_simple(p: &Polygon) -> bool {
    let v = p.vertices();
    let n = v.len();
    if polygon_area(p) <= EPSILON_AREA {
        return false;
    }
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        // Consecutive edge a-b, b-c: only a fold-back (c on a-b, or a on b-c) is a violation.
        let c = v[(i + 2) % n];
        if sign(cross(a, b, c)) == 0 && (within_box(a, b, c) || within_box(b, c, a)) {
            return false;
        }
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_intersect(a, b, v[j], v[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

type Triangle = [Point; 3];

/// Ear-clipping triangulation of a simple polygon. Triangles come out counter-clockwise.
pub fn triangulate(p: &Polygon) -> Vec<[Point; 3]> {
    let pts = p.vertices();
    let n = pts.len();
    let mut ring: Vec<usize> = if signed_area(pts) >= 0.0 {
        (0..n).collect()
    } else {
        (0..n).rev().collect()
    };
    let mut tris = Vec::with_capacity(n.saturating_sub(2));

    while ring.len() > 3 {
        let m = ring.len();
        let mut chosen = None;
        for k in 0..m {
            let a = pts[ring[(k + m - 1) % m]];
            let b = pts[ring[k]];
            let c = pts[ring[(k + 1) % m]];
            let turn = cross(a, b, c);
            if sign(turn) == 0 {
                // Straight-through vertex: dropping it leaves the region unchanged.
                let ab = b.sub(a);
                let bc = c.sub(b);
                if ab.x * bc.x + ab.y * bc.y > 0.0 {
                    chosen = Some((k, false));
                    break;
                }
                continue;
            }
            if turn < 0.0 {
                continue;
            }
            let blocked = ring.iter().any(|&r| {
                let q = pts[r];
                q != a && q != b && q != c && in_triangle_closed(a, b, c, q)
            });
            if !blocked {
                chosen = Some((k, true));
                break;
            }
        }
        let (k, emit) = chosen.unwrap_or_else(|| {
            // Only reachable through rounding on near-degenerate input: clip the sharpest convex corner.
            let k = (0..m)
                .max_by(|&i, &j| {
                    let ti = cross(pts[ring[(i + m - 1) % m]], pts[ring[i]], pts[ring[(i + 1) % m]]);
                    let tj = cross(pts[ring[(j + m - 1) % m]], pts[ring[j]], pts[ring[(j + 1) % m]]);
                    ti.total_cmp(&tj)
                })
                .unwrap_or(0);
            (k, true)
        });
        if emit {
            tris.push([
                pts[ring[(k + m - 1) % m]],
                pts[ring[k]],
                pts[ring[(k + 1) % m]],
            ]);
        }
        ring.remove(k);
    }
    if ring.len() == 3 {
        let t = [pts[ring[0]], pts[ring[1]], pts[ring[2]]];
        if sign(cross(t[0], t[1], t[2])) > 0 {
            tris.push(t);
        }
    }
    tris
}

fn in_triangle_closed(a: Point, b: Point, c: Point, q: Point) -> bool {
    cross(a, b, q) >= -EPSILON_CROSS && cross(b, c, q) >= -EPSILON_CROSS && cross(c, a, q) >= -EPSILON_CROSS
}

/// Clips convex CCW `subject` against convex CCW `clip`, returning the area of the overlap.
fn convex_overlap_area(subject: &Triangle, clip: &Triangle) -> f64 {
    let mut poly: Vec<Point> = subject.to_vec();
    let mut next = Vec::with_capacity(9);
    for e in 0..3 {
        let (c0, c1) = (clip[e], clip[(e + 1) % 3]);
        next.clear();
        let m = poly.len();
        for i in 0..m {
            let cur = poly[i];
            let prev = poly[(i + m - 1) % m];
            let dc = cross(c0, c1, cur);
            let dp = cross(c0, c1, prev);
            let cur_in = dc >= 0.0;
            let prev_in = dp >= 0.0;
            if cur_in != prev_in {
                let t = dp / (dp - dc);
                next.push(Point::new(
                    prev.x + (cur.x - prev.x) * t,
                    prev.y + (cur.y - prev.y) * t,
                ));
            }
            if cur_in {
                next.push(cur);
            }
        }
        std::mem::swap(&mut poly, &mut next);
        if poly.len() < 3 {
            return 0.0;
        }
    }
    signed_area(&poly).max(0.0)
}

/// A simple polygon with its triangulation cached, for repeated overlap queries.
#[derive(Debug, Clone)]
pub struct PreparedPolygon {
    polygon: Polygon,
    triangles: Vec<(Triangle, AARect)>,
    bbox: AARect,
    area: f64,
}

impl PreparedPolygon {
    /// Fails with `NonSimpleInput` when `p` is not simple.
    pub fn new(p: &Polygon) -> Result<Self, GeometryError> {
        Self::with_operand(p, Operand::First)
    }

    fn with_operand(p: &Polygon, which: Operand) -> Result<Self, GeometryError> {
        if !is_simple(p) {
            return Err(GeometryError::NonSimpleInput(which));
        }
        let triangles = triangulate(p)
            .into_iter()
            .map(|t| (t, bounds(&t)))
            .collect();
        Ok(Self {
            polygon: p.clone(),
            triangles,
            bbox: circumscribed_rect(p),
            area: polygon_area(p),
        })
    }

    pub fn polygon(&self) -> &Polygon {
        &self.polygon
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn intersection_area(&self, other: &PreparedPolygon) -> f64 {
        // Fixed operand order keeps the result exactly symmetric.
        let (a, b) = match compare_vertices(&self.polygon, &other.polygon) {
            Ordering::Greater => (other, self),
            _ => (self, other),
        };
        if !a.bbox.overlaps(&b.bbox) {
            return 0.0;
        }
        let mut sum = 0.0;
        for (ta, ra) in &a.triangles {
            if !ra.overlaps(&b.bbox) {
                continue;
            }
            for (tb, rb) in &b.triangles {
                if ra.overlaps(rb) {
                    sum += convex_overlap_area(ta, tb);
                }
            }
        }
        sum.clamp(0.0, a.area.min(b.area))
    }

    pub fn iou(&self, other: &PreparedPolygon) -> Result<f64, GeometryError> {
        let inter = self.intersection_area(other);
        let union = self.area + other.area - inter;
        if union <= EPSILON_AREA {
            return Err(GeometryError::DegenerateInput(union));
        }
        Ok((inter / union).clamp(0.0, 1.0))
    }
}

fn compare_vertices(a: &Polygon, b: &Polygon) -> Ordering {
    let key = |p: &Point| (p.x, p.y);
    a.vertices()
        .iter()
        .map(key)
        .zip(b.vertices().iter().map(key))
        .map(|(pa, pb)| pa.0.total_cmp(&pb.0).then(pa.1.total_cmp(&pb.1)))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Area of `a ∩ b` for two simple polygons.
pub fn intersection_area(a: &Polygon, b: &Polygon) -> Result<f64, GeometryError> {
    let pa = PreparedPolygon::with_operand(a, Operand::First)?;
    let pb = PreparedPolygon::with_operand(b, Operand::Second)?;
    Ok(pa.intersection_area(&pb))
}

/// Exact polygon intersection-over-union.
pub fn polygon_iou(a: &Polygon, b: &Polygon) -> Result<f64, GeometryError> {
    let pa = PreparedPolygon::with_operand(a, Operand::First)?;
    let pb = PreparedPolygon::with_operand(b, Operand::Second)?;
    pa.iou(&pb)
}
