//! Ear-clipping triangulation of polygons with holes.
//!
//! Holes are merged into the outer ring through bridge edges (one bridge per
//! hole, which duplicates both bridge endpoints), then ears are clipped from
//! the resulting weakly simple ring. The linked-list layout and the fallback
//! passes follow the mapbox earcut algorithm.

use super::{GeomError, Point2D, PolygonWithHoles, Ring, TriangleMesh2D};

const NIL: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Node {
    /// Vertex index in the output mesh.
    i: u32,
    x: f64,
    y: f64,
    prev: usize,
    next: usize,
    steiner: bool,
}

struct Linked {
    nodes: Vec<Node>,
}

/// Mapbox-style signed area: negative for a counter-clockwise turn.
#[inline]
fn area(p: &Node, q: &Node, r: &Node) -> f64 {
    (q.y - p.y) * (r.x - q.x) - (q.x - p.x) * (r.y - q.y)
}

#[inline]
fn equals(p: &Node, q: &Node) -> bool {
    p.x == q.x && p.y == q.y
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn point_in_triangle(ax: f64, ay: f64, bx: f64, by: f64, cx: f64, cy: f64, px: f64, py: f64) -> bool {
    (cx - px) * (ay - py) >= (ax - px) * (cy - py)
        && (ax - px) * (by - py) >= (bx - px) * (ay - py)
        && (bx - px) * (cy - py) >= (cx - px) * (by - py)
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

impl Linked {
    fn n(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    fn next(&self, i: usize) -> usize {
        self.nodes[i].next
    }

    fn prev(&self, i: usize) -> usize {
        self.nodes[i].prev
    }

    fn area3(&self, p: usize, q: usize, r: usize) -> f64 {
        area(self.n(p), self.n(q), self.n(r))
    }

    fn eq(&self, p: usize, q: usize) -> bool {
        equals(self.n(p), self.n(q))
    }

    fn insert(&mut self, i: u32, p: Point2D, last: usize) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(Node { i, x: p.x, y: p.y, prev: idx, next: idx, steiner: false });
        if last != NIL {
            let last_next = self.nodes[last].next;
            self.nodes[idx].next = last_next;
            self.nodes[idx].prev = last;
            self.nodes[last_next].prev = idx;
            self.nodes[last].next = idx;
        }
        idx
    }

    fn remove(&mut self, p: usize) {
        let (prev, next) = (self.nodes[p].prev, self.nodes[p].next);
        self.nodes[next].prev = prev;
        self.nodes[prev].next = next;
    }

    fn ring(&mut self, ring: &Ring, first_index: u32) -> usize {
        let mut last = NIL;
        for (k, &p) in ring.vertices().iter().enumerate() {
            last = self.insert(first_index + k as u32, p, last);
        }
        if last != NIL && self.eq(last, self.next(last)) {
            let nx = self.next(last);
            self.remove(last);
            last = nx;
        }
        last
    }

    /// Removes duplicate and collinear points between `start` and `end`.
    fn filter_points(&mut self, start: usize, end: usize) -> usize {
        if start == NIL {
            return start;
        }
        let mut end = if end == NIL { start } else { end };
        let mut p = start;
        loop {
            let mut again = false;
            let nx = self.next(p);
            if !self.n(p).steiner && (self.eq(p, nx) || self.area3(self.prev(p), p, nx) == 0.0) {
                let pv = self.prev(p);
                self.remove(p);
                p = pv;
                end = pv;
                if p == self.next(p) {
                    break;
                }
                again = true;
            } else {
                p = nx;
            }
            if !(again || p != end) {
                break;
            }
        }
        end
    }

    fn is_ear(&self, ear: usize) -> bool {
        let (a, b, c) = (self.prev(ear), ear, self.next(ear));
        if self.area3(a, b, c) >= 0.0 {
            return false;
        }
        let (na, nb, nc) = (self.n(a), self.n(b), self.n(c));
        let x0 = na.x.min(nb.x).min(nc.x);
        let y0 = na.y.min(nb.y).min(nc.y);
        let x1 = na.x.max(nb.x).max(nc.x);
        let y1 = na.y.max(nb.y).max(nc.y);
        let mut p = self.next(c);
        while p != a {
            let np = self.n(p);
            if np.x >= x0
                && np.x <= x1
                && np.y >= y0
                && np.y <= y1
                && !(na.x == np.x && na.y == np.y)
                && point_in_triangle(na.x, na.y, nb.x, nb.y, nc.x, nc.y, np.x, np.y)
                && self.area3(self.prev(p), p, self.next(p)) >= 0.0
            {
                return false;
            }
            p = self.next(p);
        }
        true
    }

    fn earcut_linked(&mut self, ear: usize, out: &mut Vec<[u32; 3]>, pass: u8) {
        if ear == NIL {
            return;
        }
        let mut ear = ear;
        let mut stop = ear;
        while self.prev(ear) != self.next(ear) {
            let prev = self.prev(ear);
            let next = self.next(ear);
            if self.is_ear(ear) {
                out.push([self.n(prev).i, self.n(ear).i, self.n(next).i]);
                self.remove(ear);
                ear = self.next(next);
                stop = ear;
                continue;
            }
            ear = next;
            if ear == stop {
                match pass {
                    0 => {
                        let e = self.filter_points(ear, NIL);
                        self.earcut_linked(e, out, 1);
                    }
                    1 => {
                        let e = self.filter_points(ear, NIL);
                        let e = self.cure_local_intersections(e, out);
                        self.earcut_linked(e, out, 2);
                    }
                    _ => self.split_earcut(ear, out),
                }
                break;
            }
        }
    }

    fn cure_local_intersections(&mut self, start: usize, out: &mut Vec<[u32; 3]>) -> usize {
        let mut start = start;
        let mut p = start;
        loop {
            let a = self.prev(p);
            let b = self.next(self.next(p));
            if !self.eq(a, b) && self.intersects(a, p, self.next(p), b) && self.locally_inside(a, b) && self.locally_inside(b, a) {
                out.push([self.n(a).i, self.n(p).i, self.n(b).i]);
                let pn = self.next(p);
                self.remove(p);
                self.remove(pn);
                p = b;
                start = b;
            }
            p = self.next(p);
            if p == start {
                break;
            }
        }
        self.filter_points(p, NIL)
    }

    fn split_earcut(&mut self, start: usize, out: &mut Vec<[u32; 3]>) {
        let mut a = start;
        loop {
            let mut b = self.next(self.next(a));
            while b != self.prev(a) {
                if self.n(a).i != self.n(b).i && self.is_valid_diagonal(a, b) {
                    let c = self.split_polygon(a, b);
                    let a2 = self.filter_points(a, self.next(a));
                    let c2 = self.filter_points(c, self.next(c));
                    self.earcut_linked(a2, out, 0);
                    self.earcut_linked(c2, out, 0);
                    return;
                }
                b = self.next(b);
            }
            a = self.next(a);
            if a == start {
                break;
            }
        }
    }

    fn on_segment(&self, p: usize, q: usize, r: usize) -> bool {
        let (p, q, r) = (self.n(p), self.n(q), self.n(r));
        q.x <= p.x.max(r.x) && q.x >= p.x.min(r.x) && q.y <= p.y.max(r.y) && q.y >= p.y.min(r.y)
    }

    fn intersects(&self, p1: usize, q1: usize, p2: usize, q2: usize) -> bool {
        let o1 = sign(self.area3(p1, q1, p2));
        let o2 = sign(self.area3(p1, q1, q2));
        let o3 = sign(self.area3(p2, q2, p1));
        let o4 = sign(self.area3(p2, q2, q1));
        if o1 != o2 && o3 != o4 {
            return true;
        }
        (o1 == 0 && self.on_segment(p1, p2, q1))
            || (o2 == 0 && self.on_segment(p1, q2, q1))
            || (o3 == 0 && self.on_segment(p2, p1, q2))
            || (o4 == 0 && self.on_segment(p2, q1, q2))
    }

    fn intersects_polygon(&self, a: usize, b: usize) -> bool {
        let (ai, bi) = (self.n(a).i, self.n(b).i);
        let mut p = a;
        loop {
            let pn = self.next(p);
            let (pi, pni) = (self.n(p).i, self.n(pn).i);
            if pi != ai && pni != ai && pi != bi && pni != bi && self.intersects(p, pn, a, b) {
                return true;
            }
            p = pn;
            if p == a {
                return false;
            }
        }
    }

    fn locally_inside(&self, a: usize, b: usize) -> bool {
        let (ap, an) = (self.prev(a), self.next(a));
        if self.area3(ap, a, an) < 0.0 {
            self.area3(a, b, an) >= 0.0 && self.area3(a, ap, b) >= 0.0
        } else {
            self.area3(a, b, ap) < 0.0 || self.area3(a, an, b) < 0.0
        }
    }

    fn middle_inside(&self, a: usize, b: usize) -> bool {
        let px = (self.n(a).x + self.n(b).x) / 2.0;
        let py = (self.n(a).y + self.n(b).y) / 2.0;
        let mut inside = false;
        let mut p = a;
        loop {
            let (np, nn) = (self.n(p), self.n(self.next(p)));
            if ((np.y > py) != (nn.y > py)) && nn.y != np.y && px < (nn.x - np.x) * (py - np.y) / (nn.y - np.y) + np.x {
                inside = !inside;
            }
            p = self.next(p);
            if p == a {
                return inside;
            }
        }
    }

    fn is_valid_diagonal(&self, a: usize, b: usize) -> bool {
        let (ai, bi) = (self.n(a).i, self.n(b).i);
        self.n(self.next(a)).i != bi
            && self.n(self.prev(a)).i != bi
            && !self.intersects_polygon(a, b)
            && ((self.locally_inside(a, b)
                && self.locally_inside(b, a)
                && self.middle_inside(a, b)
                && (self.area3(self.prev(a), a, self.prev(b)) != 0.0 || self.area3(a, self.prev(b), b) != 0.0))
                || (self.eq(a, b) && self.area3(self.prev(a), a, self.next(a)) > 0.0 && self.area3(self.prev(b), b, self.next(b)) > 0.0))
            && ai != bi
    }

    /// Links `a` to `b` with a bridge, duplicating both; returns the copy of `b`.
    fn split_polygon(&mut self, a: usize, b: usize) -> usize {
        let a2 = self.nodes.len();
        let na = self.nodes[a].clone();
        self.nodes.push(Node { steiner: false, ..na });
        let b2 = self.nodes.len();
        let nb = self.nodes[b].clone();
        self.nodes.push(Node { steiner: false, ..nb });
        let an = self.nodes[a].next;
        let bp = self.nodes[b].prev;

        self.nodes[a].next = b;
        self.nodes[b].prev = a;

        self.nodes[a2].next = an;
        self.nodes[an].prev = a2;

        self.nodes[b2].next = a2;
        self.nodes[a2].prev = b2;

        self.nodes[bp].next = b2;
        self.nodes[b2].prev = bp;
        b2
    }

    fn leftmost(&self, start: usize) -> usize {
        let mut p = start;
        let mut left = start;
        loop {
            let (np, nl) = (self.n(p), self.n(left));
            if np.x < nl.x || (np.x == nl.x && np.y < nl.y) {
                left = p;
            }
            p = self.next(p);
            if p == start {
                return left;
            }
        }
    }

    fn sector_contains_sector(&self, m: usize, p: usize) -> bool {
        self.area3(self.prev(m), m, self.prev(p)) < 0.0 && self.area3(self.next(p), m, self.next(m)) < 0.0
    }

    fn find_hole_bridge(&self, hole: usize, outer: usize) -> Option<usize> {
        let (hx, hy) = (self.n(hole).x, self.n(hole).y);
        let mut qx = f64::NEG_INFINITY;
        let mut m = NIL;
        let mut p = outer;
        if self.eq(hole, p) {
            return Some(p);
        }
        loop {
            let pn = self.next(p);
            if self.eq(hole, pn) {
                return Some(pn);
            }
            let (np, nn) = (self.n(p), self.n(pn));
            if hy <= np.y && hy >= nn.y && nn.y != np.y {
                let x = np.x + (hy - np.y) * (nn.x - np.x) / (nn.y - np.y);
                if x <= hx && x > qx {
                    qx = x;
                    m = if np.x < nn.x { p } else { pn };
                    if x == hx {
                        return Some(m);
                    }
                }
            }
            p = pn;
            if p == outer {
                break;
            }
        }
        if m == NIL {
            return None;
        }
        let stop = m;
        let (mx, my) = (self.n(m).x, self.n(m).y);
        let mut tan_min = f64::INFINITY;
        p = m;
        loop {
            let np = self.n(p);
            if hx >= np.x
                && np.x >= mx
                && hx != np.x
                && point_in_triangle(if hy < my { hx } else { qx }, hy, mx, my, if hy < my { qx } else { hx }, hy, np.x, np.y)
            {
                let tan = (hy - np.y).abs() / (hx - np.x);
                if self.locally_inside(p, hole)
                    && (tan < tan_min
                        || (tan == tan_min && (np.x > self.n(m).x || (np.x == self.n(m).x && self.sector_contains_sector(m, p)))))
                {
                    m = p;
                    tan_min = tan;
                }
            }
            p = self.next(p);
            if p == stop {
                break;
            }
        }
        Some(m)
    }

    fn eliminate_hole(&mut self, hole: usize, outer: usize) -> usize {
        let Some(bridge) = self.find_hole_bridge(hole, outer) else {
            return outer;
        };
        // Collinear points around the cut are kept so the triangle count
        // stays V + 2·holes − 2; the stuck-ear fallback still filters them.
        self.split_polygon(bridge, hole);
        bridge
    }
}

fn compare_xy_slope(l: &Linked, a: usize, b: usize) -> std::cmp::Ordering {
    let (na, nb) = (l.n(a), l.n(b));
    let mut r = na.x - nb.x;
    if r == 0.0 {
        r = na.y - nb.y;
        if r == 0.0 {
            let (an, bn) = (l.n(l.next(a)), l.n(l.next(b)));
            let a_slope = (an.y - na.y) / (an.x - na.x);
            let b_slope = (bn.y - nb.y) / (bn.x - nb.x);
            r = a_slope - b_slope;
        }
    }
    r.partial_cmp(&0.0).unwrap_or(std::cmp::Ordering::Equal)
}

/// Triangulates a validated polygon. Output vertices are the outer ring
/// followed by each hole ring, in the polygon's normalized orientation.
pub fn earcut_triangulate(poly: &PolygonWithHoles) -> TriangleMesh2D {
    let mut vertices: Vec<Point2D> = Vec::with_capacity(poly.vertex_count());
    for ring in poly.rings() {
        vertices.extend_from_slice(ring.vertices());
    }
    let mut l = Linked { nodes: Vec::with_capacity(vertices.len() * 3 / 2 + 8) };
    let mut triangles = Vec::with_capacity(poly.expected_triangle_count());

    let mut outer = l.ring(poly.outer(), 0);
    if outer == NIL || l.next(outer) == l.prev(outer) {
        return TriangleMesh2D { vertices, triangles };
    }
    if !poly.holes().is_empty() {
        let mut offset = poly.outer().len() as u32;
        let mut queue = Vec::with_capacity(poly.holes().len());
        for hole in poly.holes() {
            let list = l.ring(hole, offset);
            offset += hole.len() as u32;
            if list == l.next(list) {
                l.nodes[list].steiner = true;
            }
            queue.push(l.leftmost(list));
        }
        queue.sort_by(|&a, &b| compare_xy_slope(&l, a, b));
        for h in queue {
            outer = l.eliminate_hole(h, outer);
        }
    }
    l.earcut_linked(outer, &mut triangles, 0);
    TriangleMesh2D { vertices, triangles }
}

/// Validates raw rings and triangulates them.
pub fn triangulate_rings(outer: &[Point2D], holes: &[Vec<Point2D>]) -> Result<TriangleMesh2D, GeomError> {
    let poly = PolygonWithHoles::from_coords(outer.to_vec(), holes.to_vec(), 0)?;
    Ok(earcut_triangulate(&poly))
}
