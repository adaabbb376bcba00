//! Clipping of holed polygons against an axis-aligned rectangle.
//!
//! The rectangle is applied as four successive half-plane cuts. Each cut
//! splits every ring crossing the cut line into inside chains, orders the
//! chain endpoints along the line and re-links them, so concave outers split
//! into separate pieces and holes crossing the line open into the outer
//! boundary. Rings that do not cross the line are kept or dropped whole.

use super::{point_in_ring, signed_area, simplify_ring, Point2D, PolygonWithHoles, Rect, Ring};

#[derive(Debug, Clone, Copy)]
enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy)]
struct HalfPlane {
    axis: Axis,
    value: f64,
    /// Keep the side with coordinate >= value when true, <= value otherwise.
    keep_greater: bool,
}

impl HalfPlane {
    fn coord(&self, p: Point2D) -> f64 {
        match self.axis {
            Axis::X => p.x,
            Axis::Y => p.y,
        }
    }

    /// Signed distance, non-negative inside.
    fn dist(&self, p: Point2D) -> f64 {
        if self.keep_greater {
            self.coord(p) - self.value
        } else {
            self.value - self.coord(p)
        }
    }

    /// Parameter along the cut line in the direction that keeps the inside on
    /// the left.
    fn along(&self, p: Point2D) -> f64 {
        match (self.axis, self.keep_greater) {
            (Axis::X, true) => -p.y,
            (Axis::X, false) => p.y,
            (Axis::Y, true) => p.x,
            (Axis::Y, false) => -p.x,
        }
    }

    fn crossing(&self, a: Point2D, b: Point2D) -> Point2D {
        let (da, db) = (self.dist(a), self.dist(b));
        if db == 0.0 {
            return b;
        }
        if da == 0.0 {
            return a;
        }
        let t = da / (da - db);
        match self.axis {
            Axis::X => Point2D::new(self.value, a.y + t * (b.y - a.y)),
            Axis::Y => Point2D::new(a.x + t * (b.x - a.x), self.value),
        }
    }
}

struct Chain {
    points: Vec<Point2D>,
    entry_s: f64,
    exit_s: f64,
}

/// Splits a ring crossing the line into inside chains running entry to exit.
fn ring_chains(ring: &Ring, hp: &HalfPlane, out: &mut Vec<Chain>) {
    let v = ring.vertices();
    let n = v.len();
    let start = (0..n).find(|&i| hp.dist(v[i]) < 0.0).expect("ring has an outside vertex");
    let mut current: Option<Chain> = None;
    for k in 0..n {
        let a = v[(start + k) % n];
        let b = v[(start + k + 1) % n];
        let (ina, inb) = (hp.dist(a) >= 0.0, hp.dist(b) >= 0.0);
        match (ina, inb) {
            (false, true) => {
                let e = hp.crossing(a, b);
                let mut points = vec![e];
                if e != b {
                    points.push(b);
                }
                current = Some(Chain { points, entry_s: hp.along(e), exit_s: f64::NAN });
            }
            (true, true) => {
                if let Some(c) = current.as_mut() {
                    c.points.push(b);
                }
            }
            (true, false) => {
                let x = hp.crossing(a, b);
                let mut c = current.take().expect("exit follows an entry");
                if c.points.last() != Some(&x) {
                    c.points.push(x);
                }
                c.exit_s = hp.along(x);
                out.push(c);
            }
            (false, false) => {}
        }
    }
}

fn clip_halfplane(poly: &PolygonWithHoles, hp: &HalfPlane) -> Vec<PolygonWithHoles> {
    let mut chains = Vec::new();
    let mut whole_outers: Vec<Ring> = Vec::new();
    let mut whole_holes: Vec<Ring> = Vec::new();
    for (k, ring) in poly.rings().enumerate() {
        let inside = ring.vertices().iter().filter(|&&p| hp.dist(p) >= 0.0).count();
        if inside == ring.len() {
            if k == 0 {
                whole_outers.push(ring.clone());
            } else {
                whole_holes.push(ring.clone());
            }
        } else if inside > 0 {
            ring_chains(ring, hp, &mut chains);
        }
    }
    if chains.is_empty() && whole_outers.len() == 1 {
        return vec![PolygonWithHoles::from_parts_unchecked(whole_outers.pop().unwrap(), whole_holes, poly.class_code)];
    }

    // Along the line, with the inside on the left, chain exits and entries
    // alternate starting with an exit; each exit links to the next entry.
    #[derive(Clone, Copy)]
    enum Ev {
        Exit(usize),
        Entry(usize),
    }
    let mut events: Vec<(f64, u8, Ev)> = Vec::with_capacity(chains.len() * 2);
    for (i, c) in chains.iter().enumerate() {
        events.push((c.exit_s, 0, Ev::Exit(i)));
        events.push((c.entry_s, 1, Ev::Entry(i)));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut link = vec![usize::MAX; chains.len()];
    let mut pending = std::collections::VecDeque::new();
    let mut unmatched_entries = Vec::new();
    for &(_, _, ev) in &events {
        match ev {
            Ev::Exit(i) => pending.push_back(i),
            Ev::Entry(j) => match pending.pop_front() {
                Some(i) => link[i] = j,
                None => unmatched_entries.push(j),
            },
        }
    }
    // Rounding can only leave stragglers at the far end of the line.
    for (i, j) in pending.into_iter().zip(unmatched_entries) {
        link[i] = j;
    }

    let mut rings: Vec<Vec<Point2D>> = Vec::new();
    let mut visited = vec![false; chains.len()];
    for s in 0..chains.len() {
        if visited[s] {
            continue;
        }
        let mut pts = Vec::new();
        let mut c = s;
        while !visited[c] {
            visited[c] = true;
            pts.extend_from_slice(&chains[c].points);
            c = link[c];
            if c == usize::MAX {
                break;
            }
        }
        rings.push(pts);
    }

    let mut outers: Vec<Ring> = whole_outers;
    let mut holes: Vec<Ring> = whole_holes;
    for pts in rings {
        let pts = simplify_ring(pts);
        if pts.len() < 3 {
            continue;
        }
        let a = signed_area(&pts);
        if a > 0.0 {
            outers.push(Ring::from_clean(pts));
        } else if a < 0.0 {
            holes.push(Ring::from_clean(pts));
        }
    }
    assemble(outers, holes, hp, poly.class_code)
}

fn assemble(outers: Vec<Ring>, holes: Vec<Ring>, hp: &HalfPlane, class_code: u8) -> Vec<PolygonWithHoles> {
    let mut assigned: Vec<Vec<Ring>> = vec![Vec::new(); outers.len()];
    for hole in holes {
        // Probe with the vertex furthest from the cut line; it cannot lie on
        // a newly created boundary edge.
        let probe = hole.vertices().iter().copied().max_by(|a, b| hp.dist(*a).total_cmp(&hp.dist(*b))).expect("non-empty ring");
        let owner = outers
            .iter()
            .enumerate()
            .filter(|(_, o)| point_in_ring(probe, o))
            .min_by(|a, b| a.1.area().total_cmp(&b.1.area()))
            .map(|(i, _)| i);
        if let Some(i) = owner {
            assigned[i].push(hole);
        }
    }
    outers.into_iter().zip(assigned).map(|(o, h)| PolygonWithHoles::from_parts_unchecked(o, h, class_code)).collect()
}

/// Returns `poly ∩ rect` as zero or more polygons carrying the input class.
pub fn clip_polygon_to_rect(poly: &PolygonWithHoles, rect: &Rect) -> Vec<PolygonWithHoles> {
    assert!(rect.has_positive_extent(), "clip rectangle must have positive extent");
    let b = poly.bounds();
    if rect.contains_rect(&b, 0.0) {
        return vec![poly.clone()];
    }
    if !b.overlaps(rect) {
        return Vec::new();
    }
    let planes = [
        HalfPlane { axis: Axis::X, value: rect.min.x, keep_greater: true },
        HalfPlane { axis: Axis::X, value: rect.max.x, keep_greater: false },
        HalfPlane { axis: Axis::Y, value: rect.min.y, keep_greater: true },
        HalfPlane { axis: Axis::Y, value: rect.max.y, keep_greater: false },
    ];
    let mut current = vec![poly.clone()];
    for hp in &planes {
        current = current.iter().flat_map(|p| clip_halfplane(p, hp)).collect();
        if current.is_empty() {
            break;
        }
    }
    current
}
