use std::collections::{BTreeMap, BTreeSet, HashMap};

use geoscene::geom::{Point2D, Rect};
use geoscene::landcover::{LandCoverRaster, GRASS};
use geoscene::terrain::{build_lod_mesh, HeightField, LodParams, TerrainMesh};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::oracle::{barycentric, Bilinear};
use crate::{ensure, Outcome};

const SIZE: f64 = 256.0;
const BASE: f64 = 128.0;
const DEPTH: u32 = 4;
const Z_TOL: f64 = 1e-9;
const VIEWPOINTS: usize = 16;

fn height(p: Point2D) -> f64 {
    20.0 * (p.x / 37.0).sin() * (p.y / 23.0).cos() + 0.05 * p.x + 8.0 * (-((p.x - 150.0).powi(2) + (p.y - 90.0).powi(2)) / 400.0).exp()
}

fn params(viewpoint: [f64; 3], threshold: f64) -> LodParams {
    LodParams { viewpoint, base_cell: BASE, max_depth: DEPTH, split_threshold: threshold }
}

/// Sorted (x, y, z) triples of every triangle, for order-free comparison.
fn triangle_set(mesh: &TerrainMesh) -> Vec<[[u64; 3]; 3]> {
    let mut out: Vec<[[u64; 3]; 3]> = (0..mesh.triangles.len())
        .map(|t| {
            let mut c = mesh.triangle_points(t).map(|p| [p[0].to_bits(), p[1].to_bits(), 0]);
            c.sort_unstable();
            c
        })
        .collect();
    out.sort_unstable();
    out
}

/// Regular lattice over the tile with every cell split south-west to
/// north-east.
fn grid_triangles(cells: usize) -> Vec<[[u64; 3]; 3]> {
    let step = SIZE / cells as f64;
    let p = |i: usize, j: usize| [(i as f64 * step).to_bits(), (j as f64 * step).to_bits(), 0];
    let mut out = Vec::new();
    for j in 0..cells {
        for i in 0..cells {
            for mut t in [[p(i, j), p(i + 1, j), p(i + 1, j + 1)], [p(i, j), p(i + 1, j + 1), p(i, j + 1)]] {
                t.sort_unstable();
                out.push(t);
            }
        }
    }
    out.sort_unstable();
    out
}

fn check_heights(mesh: &TerrainMesh, surface: &Bilinear, label: &str) -> Result<(), String> {
    for v in &mesh.vertices {
        let want = surface.at(Point2D::new(v[0], v[1]));
        ensure!((v[2] - want).abs() <= Z_TOL, "{label}: vertex ({}, {}) at {} instead of {want}", v[0], v[1], v[2]);
    }
    Ok(())
}

fn limits(hf: &HeightField, raster: &LandCoverRaster, surface: &Bilinear) -> Outcome {
    let roots = (SIZE / BASE) as usize;
    let coarse = build_lod_mesh(hf, raster, &params([SIZE / 2.0, SIZE / 2.0, 1e9], 0.5));
    ensure!(coarse.leaves.len() == roots * roots, "coarsest: {} leaves for {} roots", coarse.leaves.len(), roots * roots);
    ensure!(coarse.leaves.iter().all(|l| l.depth == 0), "coarsest: a leaf below the roots");
    ensure!(triangle_set(&coarse) == grid_triangles(roots), "coarsest: triangles differ from the root grid");
    check_heights(&coarse, surface, "coarsest")?;

    let fine_cells = roots << DEPTH;
    let fine = build_lod_mesh(hf, raster, &params([10.0, 20.0, 5.0], 1e-12));
    ensure!(fine.leaves.iter().all(|l| l.depth == DEPTH), "finest: a leaf above depth {DEPTH}");
    ensure!(fine.vertices.len() == (fine_cells + 1).pow(2), "finest: {} vertices", fine.vertices.len());
    ensure!(triangle_set(&fine) == grid_triangles(fine_cells), "finest: triangles differ from the full grid");
    check_heights(&fine, surface, "finest")?;
    Ok(format!("limits exact ({} and {} triangles)", coarse.triangles.len(), fine.triangles.len()))
}

fn leaf_surface(mesh: &TerrainMesh, first: usize, count: usize, p: Point2D) -> Option<f64> {
    (first..first + count).find_map(|t| {
        let v = mesh.triangle_points(t);
        let w = barycentric(p, v.map(|q| Point2D::new(q[0], q[1])), 1e-9)?;
        Some(w[0] * v[0][2] + w[1] * v[1][2] + w[2] * v[2][2])
    })
}

fn check_errors(mesh: &TerrainMesh, surface: &Bilinear, label: &str) -> Result<f64, String> {
    let mut worst_ratio = 0.0f64;
    for (k, leaf) in mesh.leaves.iter().enumerate() {
        ensure!(leaf.ancestor_errors.len() == leaf.depth as usize + 1, "{label} leaf {k}: {} ancestor errors", leaf.ancestor_errors.len());
        ensure!(leaf.ancestor_errors.last() == Some(&leaf.error), "{label} leaf {k}: last ancestor error is not the leaf's");
        ensure!(leaf.ancestor_errors.windows(2).all(|w| w[1] <= w[0]), "{label} leaf {k}: errors grow toward the leaf");
        let r = leaf.rect;
        for j in 0..5 {
            for i in 0..5 {
                let p = Point2D::new(r.min.x + r.width() * i as f64 / 4.0, r.min.y + r.height() * j as f64 / 4.0);
                let z = leaf_surface(mesh, leaf.first_triangle, leaf.triangle_count, p)
                    .ok_or_else(|| format!("{label} leaf {k}: {p:?} not covered by its triangles"))?;
                let dev = (surface.at(p) - z).abs();
                ensure!(dev <= leaf.error + Z_TOL, "{label} leaf {k}: deviation {dev} above recorded {}", leaf.error);
                if leaf.error > 0.0 {
                    worst_ratio = worst_ratio.max(dev / leaf.error);
                }
            }
        }
    }
    Ok(worst_ratio)
}

/// Every pair of leaves sharing a side agrees on the vertices along it, and
/// every edge used by one triangle only lies on the tile border.
fn check_cracks(mesh: &TerrainMesh, label: &str) -> Result<usize, String> {
    let bits = |p: [f64; 3]| p.map(f64::to_bits);
    let leaf_vertices: Vec<BTreeSet<[u64; 3]>> = mesh
        .leaves
        .iter()
        .map(|l| (l.first_triangle..l.first_triangle + l.triangle_count).flat_map(|t| mesh.triangle_points(t)).map(bits).collect())
        .collect();
    let on_side = |k: usize, vertical: bool, at: f64, lo: f64, hi: f64| -> BTreeSet<[u64; 3]> {
        leaf_vertices[k]
            .iter()
            .filter(|v| {
                let (a, b) =
                    if vertical { (f64::from_bits(v[0]), f64::from_bits(v[1])) } else { (f64::from_bits(v[1]), f64::from_bits(v[0])) };
                a == at && (lo..=hi).contains(&b)
            })
            .copied()
            .collect()
    };
    let mut by_edge: HashMap<(bool, u64), (Vec<usize>, Vec<usize>)> = HashMap::new();
    for (k, l) in mesh.leaves.iter().enumerate() {
        by_edge.entry((true, l.rect.max.x.to_bits())).or_default().0.push(k);
        by_edge.entry((true, l.rect.min.x.to_bits())).or_default().1.push(k);
        by_edge.entry((false, l.rect.max.y.to_bits())).or_default().0.push(k);
        by_edge.entry((false, l.rect.min.y.to_bits())).or_default().1.push(k);
    }
    let mut pairs = 0;
    for ((vertical, at), (lows, highs)) in &by_edge {
        let at = f64::from_bits(*at);
        let span = |r: &Rect| if *vertical { (r.min.y, r.max.y) } else { (r.min.x, r.max.x) };
        for &a in lows {
            for &b in highs {
                let (a0, a1) = span(&mesh.leaves[a].rect);
                let (b0, b1) = span(&mesh.leaves[b].rect);
                let (lo, hi) = (a0.max(b0), a1.min(b1));
                if hi <= lo {
                    continue;
                }
                ensure!(
                    on_side(a, *vertical, at, lo, hi) == on_side(b, *vertical, at, lo, hi),
                    "{label}: leaves {a} and {b} disagree along their shared side"
                );
                pairs += 1;
            }
        }
    }
    let mut uses: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *uses.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    for (&(a, b), &n) in &uses {
        let (p, q) = (mesh.vertices[a as usize], mesh.vertices[b as usize]);
        let border = (p[0] == q[0] && (p[0] == 0.0 || p[0] == SIZE)) || (p[1] == q[1] && (p[1] == 0.0 || p[1] == SIZE));
        ensure!(n == 2 || (n == 1 && border), "{label}: edge {p:?}-{q:?} used by {n} triangles");
    }
    Ok(pairs)
}

fn monotone(hf: &HeightField, raster: &LandCoverRaster) -> Outcome {
    let count = |eye: [f64; 3]| build_lod_mesh(hf, raster, &params(eye, 0.5)).triangles.len();
    let rising: Vec<usize> = (0..14).map(|k| count([SIZE / 2.0, SIZE / 2.0, 2f64.powi(k)])).collect();
    let leaving: Vec<usize> = (0..14).map(|k| count([SIZE + 2f64.powi(k), SIZE / 2.0, 10.0])).collect();
    for (name, seq) in [("vertical", &rising), ("horizontal", &leaving)] {
        ensure!(seq.windows(2).all(|w| w[1] <= w[0]), "{name} sweep triangle counts increase: {seq:?}");
    }
    ensure!(rising[0] > *rising.last().expect("non-empty"), "vertical sweep never coarsens: {rising:?}");
    Ok(format!("triangle counts fall {} -> {} rising and {} -> {} receding", rising[0], rising[13], leaving[0], leaving[13]))
}

pub fn run() -> Outcome {
    let cell = 4.0;
    let n = (SIZE / cell) as usize;
    let hf = HeightField::from_fn(n, n, Point2D::new(0.0, 0.0), cell, height);
    let raster = LandCoverRaster::filled(64, Rect::new(0.0, 0.0, SIZE, SIZE), GRASS);
    let surface = Bilinear { values: &hf.values, ncols: n, nrows: n, origin: hf.origin, cell };

    let limits = limits(&hf, &raster, &surface)?;
    let mut rng = StdRng::seed_from_u64(0x10d5);
    let (mut pairs, mut transitions, mut worst) = (0, 0, 0.0f64);
    for v in 0..VIEWPOINTS {
        let eye = [rng.random_range(-50.0..SIZE + 50.0), rng.random_range(-50.0..SIZE + 50.0), rng.random_range(2.0..80.0)];
        let threshold = rng.random_range(0.3..2.0);
        let mesh = build_lod_mesh(&hf, &raster, &params(eye, threshold));
        let label = format!("viewpoint {v}");
        worst = worst.max(check_errors(&mesh, &surface, &label)?);
        pairs += check_cracks(&mesh, &label)?;
        let depths: BTreeSet<u32> = mesh.leaves.iter().map(|l| l.depth).collect();
        transitions += depths.len().saturating_sub(1);
    }
    ensure!(transitions > 0, "no viewpoint produced mixed depths");
    let monotone = monotone(&hf, &raster)?;
    Ok(format!(
        "{limits}; errors bounded at {VIEWPOINTS} viewpoints (worst {:.0}% of recorded); {pairs} shared sides crack-free over {transitions} depth transitions; {monotone}",
        worst * 100.0
    ))
}
