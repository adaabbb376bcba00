use std::collections::BTreeSet;

use geoscene::buildings::{
    assign_roof_color, compute_uv, encode_b3dm, parse_b3dm, split_by_batch, write_b3dm, BuildingMesh, ColorRaster, SplitOptions,
};
use geoscene::geom::{Point2D, Rect};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::oracle::in_triangle;
use crate::{ensure, Outcome};

const ROUND_TRIPS: usize = 50;
const UV_TOL: f64 = 1e-6;
const UV_CASES: usize = 60;
const COLOR_SCENES: usize = 20;
const DENSITY: f64 = 1.7;
const ROOF_TILT_DEG: f64 = 15.0;

/// Plan-view placement of a local footprint.
struct Placement {
    center: [f64; 2],
    angle: f64,
    quantum: Option<f64>,
}

impl Placement {
    fn random(rng: &mut StdRng, extent: f64, quantum: Option<f64>) -> Self {
        Placement {
            center: [rng.random_range(0.0..extent), rng.random_range(0.0..extent)],
            angle: rng.random_range(0.0..std::f64::consts::TAU),
            quantum,
        }
    }

    fn put(&self, x: f64, y: f64, z: f64) -> [f64; 3] {
        let (s, c) = self.angle.sin_cos();
        let p = [self.center[0] + c * x - s * y, self.center[1] + s * x + c * y, z];
        match self.quantum {
            Some(q) => p.map(|v| (v / q).round() * q),
            None => p,
        }
    }
}

fn flat_box(rng: &mut StdRng, id: &str, at: &Placement) -> BuildingMesh {
    let (w, d) = (rng.random_range(4.0..20.0), rng.random_range(4.0..20.0));
    let (z0, h) = (rng.random_range(0.0..5.0), rng.random_range(3.0..25.0));
    let corners = [(-w / 2.0, -d / 2.0), (w / 2.0, -d / 2.0), (w / 2.0, d / 2.0), (-w / 2.0, d / 2.0)];
    let mut v: Vec<[f64; 3]> = corners.iter().map(|&(x, y)| at.put(x, y, z0)).collect();
    v.extend(corners.iter().map(|&(x, y)| at.put(x, y, z0 + h)));
    let mut t = vec![[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7]];
    for i in 0..4u32 {
        let j = (i + 1) % 4;
        t.push([i, j, j + 4]);
        t.push([i, j + 4, i + 4]);
    }
    BuildingMesh::new(id, v, t)
}

/// Gable roof with the ridge along local x; `tilt_deg` is the slope angle.
fn gable(rng: &mut StdRng, id: &str, at: &Placement, tilt_deg: f64) -> BuildingMesh {
    let (w, d) = (rng.random_range(6.0..20.0), rng.random_range(4.0..14.0));
    let (z0, h) = (rng.random_range(0.0..5.0), rng.random_range(3.0..15.0));
    let rise = d / 2.0 * tilt_deg.to_radians().tan();
    let corners = [(-w / 2.0, -d / 2.0), (w / 2.0, -d / 2.0), (w / 2.0, d / 2.0), (-w / 2.0, d / 2.0)];
    let mut v: Vec<[f64; 3]> = corners.iter().map(|&(x, y)| at.put(x, y, z0)).collect();
    v.extend(corners.iter().map(|&(x, y)| at.put(x, y, z0 + h)));
    v.push(at.put(-w / 2.0, 0.0, z0 + h + rise));
    v.push(at.put(w / 2.0, 0.0, z0 + h + rise));
    let t = vec![
        [0, 2, 1],
        [0, 3, 2],
        [0, 1, 5],
        [0, 5, 4],
        [2, 3, 7],
        [2, 7, 6],
        [1, 2, 6],
        [1, 6, 5],
        [5, 6, 9],
        [3, 0, 4],
        [3, 4, 7],
        [7, 4, 8],
        [4, 5, 9],
        [4, 9, 8],
        [6, 7, 8],
        [6, 8, 9],
    ];
    BuildingMesh::new(id, v, t)
}

fn random_building(rng: &mut StdRng, id: &str, at: &Placement) -> BuildingMesh {
    match rng.random_range(0..3) {
        0 => flat_box(rng, id, at),
        1 => {
            let tilt = rng.random_range(5.0..12.0);
            gable(rng, id, at, tilt)
        }
        _ => {
            let tilt = rng.random_range(25.0..50.0);
            gable(rng, id, at, tilt)
        }
    }
}

fn normal(t: [[f64; 3]; 3]) -> [f64; 3] {
    let (u, v) = ([0, 1, 2].map(|k| t[1][k] - t[0][k]), [0, 1, 2].map(|k| t[2][k] - t[0][k]));
    [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
}

fn tilt_cos(t: [[f64; 3]; 3]) -> f64 {
    let n = normal(t);
    n[2] / (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
}

fn u32_at(b: &[u8], at: usize) -> usize {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes")) as usize
}

fn round_trips(rng: &mut StdRng) -> Outcome {
    let mut buildings = 0;
    for case in 0..ROUND_TRIPS {
        let rtc =
            [rng.random_range(-9e4..9e4f64).round(), rng.random_range(-9e4..9e4f64).round(), rng.random_range(-50.0..50.0f64).round()];
        let meshes: Vec<BuildingMesh> = (0..rng.random_range(1..7))
            .map(|k| {
                let at = Placement::random(rng, 120.0, Some(1.0 / 256.0));
                let mut m = random_building(rng, &format!("b{case}-{k}"), &at).translated(rtc);
                if rng.random_bool(0.7) {
                    m.attributes.insert("height".into(), format!("{:.2}", rng.random_range(3.0..40.0)));
                }
                if rng.random_bool(0.5) {
                    m.attributes.insert("name".into(), format!("Straat {}", rng.random_range(1..400)));
                }
                m
            })
            .collect();
        let payload = encode_b3dm(&meshes, rtc);
        let bytes = write_b3dm(&payload);

        ensure!(&bytes[0..4] == b"b3dm" && u32_at(&bytes, 4) == 1, "case {case}: bad magic or version");
        ensure!(u32_at(&bytes, 8) == bytes.len(), "case {case}: byteLength {} for {} bytes", u32_at(&bytes, 8), bytes.len());
        let sections: usize = (12..28).step_by(4).map(|at| u32_at(&bytes, at)).sum();
        let glb_at = 28 + sections;
        ensure!(glb_at % 8 == 0, "case {case}: glb starts at unaligned offset {glb_at}");
        ensure!(&bytes[glb_at..glb_at + 4] == b"glTF", "case {case}: no glTF magic at {glb_at}");
        ensure!(u32_at(&bytes, glb_at + 8) == bytes.len() - glb_at, "case {case}: glb length disagrees with the header");
        let ft: serde_json::Value = serde_json::from_slice(&bytes[28..28 + u32_at(&bytes, 12)]).map_err(|e| e.to_string())?;
        ensure!(ft["BATCH_LENGTH"] == meshes.len(), "case {case}: BATCH_LENGTH {}", ft["BATCH_LENGTH"]);

        let parsed = parse_b3dm(&bytes).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(parsed == payload, "case {case}: parsed payload differs");
        ensure!(write_b3dm(&parsed) == bytes, "case {case}: rewritten bytes differ");

        let split = split_by_batch(&parsed, &SplitOptions::default()).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(split.len() == meshes.len(), "case {case}: {} buildings after split, {} before", split.len(), meshes.len());
        for (a, b) in meshes.iter().zip(&split) {
            ensure!(a.id == b.id, "case {case}: id {} became {}", a.id, b.id);
            ensure!(a.vertices.len() == b.vertices.len(), "case {case} {}: vertex count changed", a.id);
            ensure!(a.triangles.len() == b.triangles.len(), "case {case} {}: triangle count changed", a.id);
            for t in 0..a.triangles.len() {
                ensure!(a.triangle_points(t) == b.triangle_points(t), "case {case} {}: triangle {t} moved", a.id);
            }
            for (k, v) in &a.attributes {
                ensure!(b.attributes.get(k) == Some(v), "case {case} {}: attribute {k} lost", a.id);
            }
        }
        buildings += meshes.len();
    }
    Ok(format!("{ROUND_TRIPS} b3dm round trips byte-equal, {buildings} buildings conserved by batch split"))
}

fn uv_at(m: &BuildingMesh, t: usize, k: usize) -> [f64; 2] {
    m.uvs[m.triangles[t][k] as usize]
}

fn uv_invariance(rng: &mut StdRng) -> Outcome {
    let roof_cos = ROOF_TILT_DEG.to_radians().cos();
    let mut worst = 0.0f64;
    let (mut facades, mut flats) = (0, 0);
    for case in 0..UV_CASES {
        let at = Placement::random(rng, 50.0, None);
        let m = random_building(rng, "uv", &at);
        let base = compute_uv(&m, DENSITY).map_err(|e| e.to_string())?;
        let angle = rng.random_range(-3.0..3.0);
        let pivot = [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)];
        let shift = [rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3), rng.random_range(-10.0..10.0)];
        let moved = compute_uv(&m.rotated_about_up(angle, pivot).translated(shift), DENSITY).map_err(|e| e.to_string())?;
        let shifted = compute_uv(&m.translated(shift), DENSITY).map_err(|e| e.to_string())?;
        for t in 0..m.triangles.len() {
            let horizontal = tilt_cos(m.triangle_points(t)).abs() > roof_cos;
            let other = if horizontal { &shifted } else { &moved };
            for k in 0..3 {
                let (a, b) = (uv_at(&base, t, k), uv_at(other, t, k));
                let d = (a[0] - b[0]).abs().max((a[1] - b[1]).abs());
                worst = worst.max(d);
                ensure!(d <= UV_TOL, "case {case}: triangle {t} corner {k} uv moved by {d:e}");
            }
            if horizontal {
                flats += 1;
            } else {
                facades += 1;
            }
        }
    }
    Ok(format!(
        "uv invariant on {facades} facade triangles under rigid motion and {flats} horizontal under translation (worst {worst:.1e})"
    ))
}

fn lower_median(mut v: Vec<u8>) -> u8 {
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

fn roof_colors(rng: &mut StdRng) -> Outcome {
    let roof_cos = ROOF_TILT_DEG.to_radians().cos();
    let palette: [[u8; 3]; 6] = [[180, 60, 50], [90, 90, 95], [200, 200, 190], [60, 120, 60], [140, 100, 70], [30, 30, 40]];
    let (mut colored, mut fallback) = (0, 0);
    for scene in 0..COLOR_SCENES {
        let (w, h, px) = (120, 100, rng.random_range(0.3..0.8));
        let bounds = Rect::new(-5.0, -5.0, -5.0 + w as f64 * px, -5.0 + h as f64 * px);
        let mut aerial = ColorRaster::filled(w, h, bounds, [0, 0, 0]);
        for row in 0..h {
            for col in 0..w {
                aerial.set(col, row, palette[rng.random_range(0..palette.len())]);
            }
        }
        for b in 0..8 {
            let at = Placement::random(rng, bounds.max.x, None);
            let m = compute_uv(&random_building(rng, &format!("r{b}"), &at), 1.0).map_err(|e| e.to_string())?;
            let roofs: Vec<usize> = (0..m.triangles.len()).filter(|&t| tilt_cos(m.triangle_points(t)) > roof_cos).collect();
            ensure!(roofs == m.roof_faces, "scene {scene} building {b}: roof faces {:?}, oracle {roofs:?}", m.roof_faces);

            let tris: Vec<[Point2D; 3]> = roofs.iter().map(|&t| m.triangle_points(t).map(|p| Point2D::new(p[0], p[1]))).collect();
            let mut hits = BTreeSet::new();
            for row in 0..h {
                for col in 0..w {
                    let c = Point2D::new(bounds.min.x + (col as f64 + 0.5) * px, bounds.max.y - (row as f64 + 0.5) * px);
                    if tris.iter().any(|&t| in_triangle(c, t)) {
                        hits.insert((row, col));
                    }
                }
            }
            let want = if hits.len() < 4 {
                fallback += 1;
                [128, 128, 128]
            } else {
                colored += 1;
                [0, 1, 2].map(|k| lower_median(hits.iter().map(|&(r, c)| aerial.get(c, r)[k]).collect()))
            };
            let got = assign_roof_color(&m, &aerial).roof_color;
            ensure!(got == want, "scene {scene} building {b}: roof color {got:?}, oracle {want:?} from {} pixels", hits.len());
        }
    }
    Ok(format!("roof colors match the pixel scan ({colored} sampled, {fallback} fallback)"))
}

pub fn run() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xb3d5);
    Ok([round_trips(&mut rng)?, uv_invariance(&mut rng)?, roof_colors(&mut rng)?].join("; "))
}
