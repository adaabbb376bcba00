use std::time::{Duration, Instant};

use geoscene::geom::{earcut_triangulate, Point2D};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::oracle::{polygon_area, random_polygon};
use crate::{ensure, Outcome};

const POLYGONS: usize = 500;
const AREA_REL_TOL: f64 = 1e-9;
const TIME_LIMIT: Duration = Duration::from_secs(10);

fn interval(t: &[Point2D; 3], nx: f64, ny: f64) -> (f64, f64) {
    t.iter().map(|p| p.x * nx + p.y * ny).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Separating-axis test; intervals that only touch within `eps` count as
/// disjoint, so neighbors sharing an edge or vertex do not overlap.
fn overlap(a: &[Point2D; 3], b: &[Point2D; 3], eps: f64) -> bool {
    for t in [a, b] {
        for i in 0..3 {
            let (p, q) = (t[i], t[(i + 1) % 3]);
            let (nx, ny) = (p.y - q.y, q.x - p.x);
            let len = nx.hypot(ny);
            if len == 0.0 {
                continue;
            }
            let (a0, a1) = interval(a, nx / len, ny / len);
            let (b0, b1) = interval(b, nx / len, ny / len);
            if a1 <= b0 + eps || b1 <= a0 + eps {
                return false;
            }
        }
    }
    true
}

fn twice_area(t: &[Point2D; 3]) -> f64 {
    (t[1].x - t[0].x) * (t[2].y - t[0].y) - (t[2].x - t[0].x) * (t[1].y - t[0].y)
}

pub fn run() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x7121);
    let mut elapsed = Duration::ZERO;
    let (mut holes, mut triangles, mut worst_area) = (0, 0, 0.0f64);
    for case in 0..POLYGONS {
        let scale = 10f64.powf(rng.random_range(-1.5..2.0));
        let center = Point2D::new(rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3));
        let (poly, rings) = random_polygon(&mut rng, center, scale * 100.0, 4, 1);

        let started = Instant::now();
        let mesh = earcut_triangulate(&poly);
        elapsed += started.elapsed();

        let h = rings.len() - 1;
        let expected: usize = rings.iter().map(Vec::len).sum::<usize>() + 2 * h - 2;
        ensure!(mesh.triangles.len() == expected, "case {case}: {} triangles, formula gives {expected}", mesh.triangles.len());

        let tris: Vec<[Point2D; 3]> = mesh.triangles.iter().map(|t| t.map(|i| mesh.vertices[i as usize])).collect();
        let oracle = polygon_area(&rings);
        let total: f64 = tris.iter().map(|t| 0.5 * twice_area(t).abs()).sum();
        let rel = (total - oracle).abs() / oracle;
        ensure!(rel <= AREA_REL_TOL, "case {case}: area off by {rel:e} relative");
        worst_area = worst_area.max(rel);

        let eps = 1e-9 * scale * 100.0;
        let boxes: Vec<(f64, f64, f64, f64)> = tris
            .iter()
            .map(|t| {
                let (x0, x1) = interval(t, 1.0, 0.0);
                let (y0, y1) = interval(t, 0.0, 1.0);
                (x0, y0, x1, y1)
            })
            .collect();
        for i in 0..tris.len() {
            if twice_area(&tris[i]).abs() <= eps * eps {
                continue;
            }
            for j in i + 1..tris.len() {
                let (a, b) = (boxes[i], boxes[j]);
                if a.2 <= b.0 || b.2 <= a.0 || a.3 <= b.1 || b.3 <= a.1 || twice_area(&tris[j]).abs() <= eps * eps {
                    continue;
                }
                ensure!(!overlap(&tris[i], &tris[j], eps), "case {case}: triangles {i} and {j} overlap");
            }
        }
        holes += h;
        triangles += tris.len();
    }
    ensure!(elapsed < TIME_LIMIT, "triangulation took {:.2} s", elapsed.as_secs_f64());
    Ok(format!(
        "{POLYGONS} polygons, {holes} holes, {triangles} triangles, worst area error {worst_area:.1e}, no overlaps, earcut {:.3} s",
        elapsed.as_secs_f64()
    ))
}
