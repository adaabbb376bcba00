//! Planar geometry kernel: polygon types, predicates, triangulation,
//! rectangle clipping and the local geographic projection.

mod clip;
mod earcut;
mod project;

pub use clip::clip_polygon_to_rect;
pub use earcut::{earcut_triangulate, triangulate_rings};
pub use project::{project_to_scene, unproject_from_scene, LocalFrame, SceneProjection, MAX_REGION_RADIUS_M};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("point is {distance_m:.1} m from the region origin (limit {limit_m} m)")]
    OutOfRegion { distance_m: f64, limit_m: f64 },
    #[error("coordinate out of range: {0}")]
    InvalidCoordinate(String),
}

/// Scene-local position in meters (x east, y north).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2D { x, y }
    }

    pub fn distance(self, other: Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Twice the signed area of triangle `abc`; positive when counter-clockwise.
#[inline]
pub fn orient(a: Point2D, b: Point2D, c: Point2D) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Axis-aligned rectangle in scene meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point2D,
    pub max: Point2D,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect { min: Point2D::new(min_x, min_y), max: Point2D::new(max_x, max_y) }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point2D {
        Point2D::new(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y))
    }

    pub fn has_positive_extent(&self) -> bool {
        self.width() > 0.0 && self.height() > 0.0
    }

    /// Closed containment test.
    pub fn contains(&self, p: Point2D) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, other: &Rect, eps: f64) -> bool {
        other.min.x >= self.min.x - eps
            && other.min.y >= self.min.y - eps
            && other.max.x <= self.max.x + eps
            && other.max.y <= self.max.y + eps
    }

    /// True when the two rectangles share a region of positive area.
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.min.x < other.max.x && other.min.x < self.max.x && self.min.y < other.max.y && other.min.y < self.max.y
    }

    /// Closed-set test: rectangles sharing only an edge or corner touch.
    pub fn touches(&self, other: &Rect) -> bool {
        self.min.x <= other.max.x && other.min.x <= self.max.x && self.min.y <= other.max.y && other.min.y <= self.max.y
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let r =
            Rect::new(self.min.x.max(other.min.x), self.min.y.max(other.min.y), self.max.x.min(other.max.x), self.max.y.min(other.max.y));
        r.has_positive_extent().then_some(r)
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect::new(self.min.x.min(other.min.x), self.min.y.min(other.min.y), self.max.x.max(other.max.x), self.max.y.max(other.max.y))
    }

    pub fn expand(&self, d: f64) -> Rect {
        Rect::new(self.min.x - d, self.min.y - d, self.max.x + d, self.max.y + d)
    }

    pub fn from_points(points: impl IntoIterator<Item = Point2D>) -> Option<Rect> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut r = Rect { min: first, max: first };
        for p in it {
            r.min.x = r.min.x.min(p.x);
            r.min.y = r.min.y.min(p.y);
            r.max.x = r.max.x.max(p.x);
            r.max.y = r.max.y.max(p.y);
        }
        Some(r)
    }
}

/// Closed polygon boundary. The closing edge is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    vertices: Vec<Point2D>,
}

impl Ring {
    /// Removes repeated and collinear vertices (including an explicit closing
    /// vertex) and rejects rings with fewer than three remaining vertices or
    /// zero area.
    pub fn new(vertices: Vec<Point2D>) -> Result<Ring, GeomError> {
        if let Some(bad) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(GeomError::InvalidCoordinate(format!("non-finite vertex {bad:?}")));
        }
        let cleaned = simplify_ring(vertices);
        if cleaned.len() < 3 {
            return Err(GeomError::DegeneratePolygon(format!("ring has {} distinct non-collinear vertices", cleaned.len())));
        }
        let ring = Ring { vertices: cleaned };
        if ring.signed_area() == 0.0 {
            return Err(GeomError::DegeneratePolygon("ring has zero area".into()));
        }
        Ok(ring)
    }

    pub(crate) fn from_clean(vertices: Vec<Point2D>) -> Ring {
        Ring { vertices }
    }

    pub fn vertices(&self) -> &[Point2D] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Iterates edges `(v[i], v[i+1])`, including the closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (Point2D, Point2D)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area, positive for counter-clockwise rings.
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn is_ccw(&self) -> bool {
        self.signed_area() > 0.0
    }

    pub fn reversed(&self) -> Ring {
        let mut v = self.vertices.clone();
        v.reverse();
        Ring { vertices: v }
    }

    pub fn bounds(&self) -> Rect {
        Rect::from_points(self.vertices.iter().copied()).expect("ring is non-empty")
    }

    /// Whether any two non-adjacent edges touch, or adjacent edges overlap.
    pub fn self_intersects(&self) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            for j in (i + 1)..n {
                let (c, d) = (self.vertices[j], self.vertices[(j + 1) % n]);
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // Shared endpoint only; anything more is an overlap.
                    let shared = if j == i + 1 { b } else { a };
                    let (other_a, other_b) = if j == i + 1 { (a, d) } else { (b, c) };
                    if orient(other_a, shared, other_b) == 0.0
                        && ((other_a.x - shared.x) * (other_b.x - shared.x) + (other_a.y - shared.y) * (other_b.y - shared.y)) > 0.0
                    {
                        return true;
                    }
                    continue;
                }
                if segments_intersect(a, b, c, d) {
                    return true;
                }
            }
        }
        false
    }
}

pub(crate) fn signed_area(v: &[Point2D]) -> f64 {
    let n = v.len();
    if n < 3 {
        return 0.0;
    }
    // Translate to the first vertex to limit cancellation.
    let o = v[0];
    let mut s = 0.0;
    for i in 1..n - 1 {
        s += orient(o, v[i], v[i + 1]);
    }
    0.5 * s
}

/// Drops repeated and exactly collinear vertices until none remain.
pub(crate) fn simplify_ring(mut v: Vec<Point2D>) -> Vec<Point2D> {
    loop {
        let n = v.len();
        if n < 3 {
            v.dedup();
            return v;
        }
        let mut out: Vec<Point2D> = Vec::with_capacity(n);
        let mut changed = false;
        for i in 0..n {
            let prev = v[(i + n - 1) % n];
            let cur = v[i];
            let next = v[(i + 1) % n];
            if cur == prev || orient(prev, cur, next) == 0.0 {
                changed = true;
                // Remove one vertex per pass around each neighborhood so that
                // spikes collapse deterministically.
                v.remove(i);
                break;
            }
            out.push(cur);
        }
        if !changed {
            return out;
        }
    }
}

pub(crate) fn on_segment(a: Point2D, b: Point2D, p: Point2D) -> bool {
    orient(a, b, p) == 0.0 && p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed segment intersection test (touching counts).
pub(crate) fn segments_intersect(a: Point2D, b: Point2D, c: Point2D, d: Point2D) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// Half-open crossing test of a rightward ray from `p` against edge `a-b`.
///
/// The predicate is evaluated on the endpoints ordered by y, so an edge shared
/// by two rings or triangles gives the same answer from both sides. A point on
/// a left or bottom edge counts as inside, on a right or top edge as outside.
#[inline]
pub fn ray_crosses(a: Point2D, b: Point2D, p: Point2D) -> bool {
    if (a.y > p.y) == (b.y > p.y) {
        return false;
    }
    let (lo, hi) = if a.y < b.y { (a, b) } else { (b, a) };
    orient(lo, hi, p) > 0.0
}

pub fn point_in_ring(p: Point2D, ring: &Ring) -> bool {
    ring.edges().filter(|&(a, b)| ray_crosses(a, b, p)).count() % 2 == 1
}

/// Even-odd, half-open point-in-triangle test consistent with
/// [`point_in_polygon`]: a triangulation of a polygon assigns each point the
/// polygon contains to exactly one triangle.
#[inline]
pub fn point_in_triangle(p: Point2D, a: Point2D, b: Point2D, c: Point2D) -> bool {
    (ray_crosses(a, b, p) as u8 + ray_crosses(b, c, p) as u8 + ray_crosses(c, a, p) as u8) % 2 == 1
}

/// Land-cover class code attached to polygons. Code 0 is water.
pub type ClassCode = u8;

/// Planar region with one outer ring and any number of hole rings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonWithHoles {
    outer: Ring,
    holes: Vec<Ring>,
    pub class_code: ClassCode,
}

impl PolygonWithHoles {
    /// Normalizes orientation (outer counter-clockwise, holes clockwise) and
    /// validates topology.
    pub fn new(outer: Ring, holes: Vec<Ring>, class_code: ClassCode) -> Result<Self, GeomError> {
        let outer = if outer.is_ccw() { outer } else { outer.reversed() };
        if outer.self_intersects() {
            return Err(GeomError::InvalidTopology("outer ring self-intersects".into()));
        }
        let holes: Vec<Ring> = holes.into_iter().map(|h| if h.is_ccw() { h.reversed() } else { h }).collect();
        for (k, hole) in holes.iter().enumerate() {
            if hole.self_intersects() {
                return Err(GeomError::InvalidTopology(format!("hole {k} self-intersects")));
            }
            if !ring_strictly_inside(hole, &outer) {
                return Err(GeomError::InvalidTopology(format!("hole {k} is not strictly inside the outer ring")));
            }
        }
        for i in 0..holes.len() {
            for j in (i + 1)..holes.len() {
                if rings_touch_or_nest(&holes[i], &holes[j]) {
                    return Err(GeomError::InvalidTopology(format!("holes {i} and {j} overlap")));
                }
            }
        }
        Ok(PolygonWithHoles { outer, holes, class_code })
    }

    /// Builds a polygon from raw coordinate rings.
    pub fn from_coords(outer: Vec<Point2D>, holes: Vec<Vec<Point2D>>, class_code: ClassCode) -> Result<Self, GeomError> {
        let outer = Ring::new(outer)?;
        let holes = holes.into_iter().map(Ring::new).collect::<Result<Vec<_>, _>>()?;
        Self::new(outer, holes, class_code)
    }

    /// For rings produced by clipping, where orientation and topology hold by
    /// construction.
    pub(crate) fn from_parts_unchecked(outer: Ring, holes: Vec<Ring>, class_code: ClassCode) -> Self {
        PolygonWithHoles { outer, holes, class_code }
    }

    pub fn rect(r: Rect, class_code: ClassCode) -> Result<Self, GeomError> {
        Self::from_coords(vec![r.min, Point2D::new(r.max.x, r.min.y), r.max, Point2D::new(r.min.x, r.max.y)], vec![], class_code)
    }

    pub fn outer(&self) -> &Ring {
        &self.outer
    }

    pub fn holes(&self) -> &[Ring] {
        &self.holes
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        std::iter::once(&self.outer).chain(self.holes.iter())
    }

    pub fn vertex_count(&self) -> usize {
        self.rings().map(Ring::len).sum()
    }

    pub fn area(&self) -> f64 {
        self.outer.area() - self.holes.iter().map(Ring::area).sum::<f64>()
    }

    pub fn bounds(&self) -> Rect {
        self.outer.bounds()
    }

    pub fn with_class(mut self, class_code: ClassCode) -> Self {
        self.class_code = class_code;
        self
    }

    /// Triangle count produced by ear clipping with one bridge per hole.
    pub fn expected_triangle_count(&self) -> usize {
        self.vertex_count() + 2 * self.holes.len() - 2
    }

    /// Euclidean distance from `p` to the nearest boundary edge.
    pub fn boundary_distance(&self, p: Point2D) -> f64 {
        self.rings().flat_map(Ring::edges).map(|(a, b)| point_segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
    }
}

pub fn point_segment_distance(p: Point2D, a: Point2D, b: Point2D) -> f64 {
    closest_point_on_segment(p, a, b).0.distance(p)
}

/// Closest point on segment `a-b` to `p` and its parameter in `[0, 1]`.
pub fn closest_point_on_segment(p: Point2D, a: Point2D, b: Point2D) -> (Point2D, f64) {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (a, 0.0);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    (Point2D::new(a.x + t * dx, a.y + t * dy), t)
}

fn ring_strictly_inside(inner: &Ring, outer: &Ring) -> bool {
    for &v in inner.vertices() {
        if outer.edges().any(|(a, b)| on_segment(a, b, v)) || !point_in_ring(v, outer) {
            return false;
        }
    }
    !rings_cross(inner, outer)
}

fn rings_cross(r1: &Ring, r2: &Ring) -> bool {
    let b1 = r1.bounds();
    let b2 = r2.bounds();
    if b1.max.x < b2.min.x || b2.max.x < b1.min.x || b1.max.y < b2.min.y || b2.max.y < b1.min.y {
        return false;
    }
    r1.edges().any(|(a, b)| r2.edges().any(|(c, d)| segments_intersect(a, b, c, d)))
}

fn rings_touch_or_nest(r1: &Ring, r2: &Ring) -> bool {
    rings_cross(r1, r2) || point_in_ring(r1.vertices()[0], r2) || point_in_ring(r2.vertices()[0], r1)
}

/// True iff `p` lies inside the outer ring and outside every hole, using the
/// even-odd rule with the half-open edge convention.
pub fn point_in_polygon(p: Point2D, poly: &PolygonWithHoles) -> bool {
    let b = poly.bounds();
    if p.x < b.min.x || p.x > b.max.x || p.y < b.min.y || p.y > b.max.y {
        return false;
    }
    poly.rings().flat_map(Ring::edges).filter(|&(a, c)| ray_crosses(a, c, p)).count() % 2 == 1
}

/// Vertex-indexed planar triangle mesh. Triangles are counter-clockwise.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TriangleMesh2D {
    pub vertices: Vec<Point2D>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh2D {
    pub fn triangle(&self, t: usize) -> [Point2D; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * orient(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Index of the triangle containing `p` under the half-open rule.
    pub fn locate(&self, p: Point2D) -> Option<usize> {
        (0..self.triangles.len()).find(|&t| {
            let [a, b, c] = self.triangle(t);
            point_in_triangle(p, a, b, c)
        })
    }
}

/// Geographic position in WGS84 degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeomError> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(GeomError::InvalidCoordinate(format!("lat {lat}, lon {lon} out of range")));
        }
        Ok(GeoPoint { lat, lon })
    }
}
