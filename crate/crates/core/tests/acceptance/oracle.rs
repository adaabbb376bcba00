//! Brute-force reference implementations, independent of the library code
//! they check.

use std::f64::consts::TAU;

use geoscene::geom::{ClassCode, Point2D, PolygonWithHoles};
use rand::rngs::StdRng;
use rand::Rng;

pub fn shoelace(ring: &[Point2D]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        * 0.5
}

/// Area enclosed by the outer ring minus the holes.
pub fn polygon_area(rings: &[Vec<Point2D>]) -> f64 {
    rings.iter().enumerate().map(|(i, r)| if i == 0 { shoelace(r).abs() } else { -shoelace(r).abs() }).sum()
}

/// Crossing-number test over every ring.
pub fn even_odd(p: Point2D, rings: &[Vec<Point2D>]) -> bool {
    let mut inside = false;
    for ring in rings {
        let n = ring.len();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y) {
                inside = !inside;
            }
        }
    }
    inside
}

pub fn segment_distance(p: Point2D, a: Point2D, b: Point2D) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) };
    (p.x - (a.x + t * dx)).hypot(p.y - (a.y + t * dy))
}

pub fn boundary_distance(p: Point2D, rings: &[Vec<Point2D>]) -> f64 {
    rings
        .iter()
        .flat_map(|r| (0..r.len()).map(move |i| (r[i], r[(i + 1) % r.len()])))
        .map(|(a, b)| segment_distance(p, a, b))
        .fold(f64::INFINITY, f64::min)
}

fn cross(o: Point2D, a: Point2D, b: Point2D) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Barycentric weights of `p` in triangle `t`, or `None` when `p` lies
/// outside by more than `tol` (in weight units).
pub fn barycentric(p: Point2D, t: [Point2D; 3], tol: f64) -> Option<[f64; 3]> {
    let area = cross(t[0], t[1], t[2]);
    if area == 0.0 {
        return None;
    }
    let w = [cross(p, t[1], t[2]) / area, cross(t[0], p, t[2]) / area, cross(t[0], t[1], p) / area];
    w.iter().all(|&x| x >= -tol).then_some(w)
}

/// Inclusive point-in-triangle test by edge signs.
pub fn in_triangle(p: Point2D, t: [Point2D; 3]) -> bool {
    let d = [cross(t[0], t[1], p), cross(t[1], t[2], p), cross(t[2], t[0], p)];
    let neg = d.iter().any(|&x| x < 0.0);
    let pos = d.iter().any(|&x| x > 0.0);
    !(neg && pos)
}

/// Ring of `n` vertices at sorted, jittered angles around `c`.
pub fn star_ring(rng: &mut StdRng, c: Point2D, r_min: f64, r_max: f64, n: usize) -> Vec<Point2D> {
    let step = TAU / n as f64;
    (0..n)
        .map(|k| {
            let a = step * (k as f64 + rng.random_range(-0.35..0.35));
            let r = rng.random_range(r_min..r_max);
            Point2D::new(c.x + r * a.cos(), c.y + r * a.sin())
        })
        .collect()
}

/// Star-shaped outer ring of radius ~`radius` around `center` with up to
/// `max_holes` disjoint star holes. Retries until the library accepts it.
pub fn random_polygon(
    rng: &mut StdRng,
    center: Point2D,
    radius: f64,
    max_holes: usize,
    code: ClassCode,
) -> (PolygonWithHoles, Vec<Vec<Point2D>>) {
    loop {
        let n = rng.random_range(5..48);
        let outer = star_ring(rng, Point2D::new(0.0, 0.0), 60.0, 100.0, n);
        let mut holes: Vec<Vec<Point2D>> = Vec::new();
        let mut placed: Vec<(Point2D, f64)> = Vec::new();
        for _ in 0..rng.random_range(0..=max_holes) {
            for _ in 0..20 {
                let (a, d, r) = (rng.random_range(0.0..TAU), rng.random_range(0.0..35.0), rng.random_range(3.0..8.0));
                let c = Point2D::new(d * a.cos(), d * a.sin());
                if placed.iter().all(|&(q, rq)| q.distance(c) > r + rq + 1.0) {
                    let k = rng.random_range(3..9);
                    holes.push(star_ring(rng, c, 0.6 * r, r, k));
                    placed.push((c, r));
                    break;
                }
            }
        }
        let outer_rings = vec![outer.clone()];
        let holes_clear = holes.iter().flatten().all(|&p| even_odd(p, &outer_rings) && boundary_distance(p, &outer_rings) > 0.5);
        if !holes_clear {
            continue;
        }
        let s = radius / 100.0;
        let place = |ring: &Vec<Point2D>| ring.iter().map(|p| Point2D::new(center.x + s * p.x, center.y + s * p.y)).collect::<Vec<_>>();
        let outer = place(&outer);
        let holes: Vec<Vec<Point2D>> = holes.iter().map(place).collect();
        if let Ok(poly) = PolygonWithHoles::from_coords(outer.clone(), holes.clone(), code) {
            let mut rings = vec![outer];
            rings.extend(holes);
            return (poly, rings);
        }
    }
}

/// Bilinear surface through cell centers, clamped at the extent edges.
pub struct Bilinear<'a> {
    pub values: &'a [f64],
    pub ncols: usize,
    pub nrows: usize,
    pub origin: Point2D,
    pub cell: f64,
}

impl Bilinear<'_> {
    pub fn at(&self, p: Point2D) -> f64 {
        let axis = |v: f64, n: usize| {
            let u = v.clamp(0.0, (n - 1) as f64);
            let i = (u.floor() as usize).min(n.saturating_sub(2));
            (i, u - i as f64)
        };
        let (c, tx) = axis((p.x - self.origin.x) / self.cell - 0.5, self.ncols);
        let (r, ty) = axis((p.y - self.origin.y) / self.cell - 0.5, self.nrows);
        let z = |c: usize, r: usize| self.values[r.min(self.nrows - 1) * self.ncols + c.min(self.ncols - 1)];
        let south = z(c, r) * (1.0 - tx) + z(c + 1, r) * tx;
        let north = z(c, r + 1) * (1.0 - tx) + z(c + 1, r + 1) * tx;
        south * (1.0 - ty) + north * ty
    }
}

pub struct UnionFind(Vec<usize>);

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    pub fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut j = i;
        while self.0[j] != r {
            let next = self.0[j];
            self.0[j] = r;
            j = next;
        }
        r
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra] = rb;
        }
    }
}

/// 8-connected groups of the `on` cells of a `w`×`h` grid, each as a list
/// of flat indices.
pub fn components8(w: usize, h: usize, on: impl Fn(usize) -> bool) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(w * h);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !on(i) {
                continue;
            }
            // Half of the neighborhood is enough for undirected unions.
            for (dc, dr) in [(1i64, 0i64), (-1, 1), (0, 1), (1, 1)] {
                let (nc, nr) = (c as i64 + dc, r as i64 + dr);
                if nc >= 0 && nc < w as i64 && nr < h as i64 {
                    let j = nr as usize * w + nc as usize;
                    if on(j) {
                        uf.union(i, j);
                    }
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in (0..w * h).filter(|&i| on(i)) {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}
