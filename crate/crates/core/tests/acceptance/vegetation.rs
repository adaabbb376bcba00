use std::collections::BTreeMap;

use geoscene::geom::{Point2D, Rect};
use geoscene::ingest::TileAddress;
use geoscene::vegetation::{detect_crowns, merge_cross_tile, CrownParams, CrownRaster};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::oracle::components8;
use crate::{ensure, Outcome};

const RASTERS: usize = 100;
const CENTROID_TOL_PX: f64 = 0.5;

fn addr(x: u32, y: u32) -> TileAddress {
    TileAddress::new(12, 1000 + x, 2000 + y, "trees").expect("valid address")
}

fn random_raster(rng: &mut StdRng) -> CrownRaster {
    let (w, h) = (rng.random_range(12..48), rng.random_range(12..48));
    let mut px = vec![0u8; w * h];
    for _ in 0..rng.random_range(1..9) {
        let (cx, cy, r) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64), rng.random_range(0.5..4.0));
        let v = rng.random_range(60..=255u8);
        for row in 0..h {
            for col in 0..w {
                if (col as f64 + 0.5 - cx).hypot(row as f64 + 0.5 - cy) <= r {
                    px[row * w + col] = v;
                }
            }
        }
    }
    for p in px.iter_mut() {
        if rng.random_bool(0.02) {
            *p = rng.random_range(1..=255);
        }
    }
    let size = [0.25, 0.5, 1.0][rng.random_range(0..3)];
    let (x0, y0) = (rng.random_range(-200..200) as f64, rng.random_range(-200..200) as f64);
    CrownRaster::new(addr(0, 0), w, h, Rect::new(x0, y0, x0 + w as f64 * size, y0 + h as f64 * size), px).expect("valid raster")
}

/// Centroids (mean pixel center) of components with at least `min` pixels.
fn oracle_crowns(r: &CrownRaster, min: usize) -> Vec<Point2D> {
    let size = r.bounds.width() / r.width as f64;
    components8(r.width, r.height, |i| r.pixels[i] != 0)
        .into_iter()
        .filter(|c| c.len() >= min)
        .map(|c| {
            let n = c.len() as f64;
            let sx: f64 = c.iter().map(|&i| r.bounds.min.x + ((i % r.width) as f64 + 0.5) * size).sum();
            let sy: f64 = c.iter().map(|&i| r.bounds.max.y - ((i / r.width) as f64 + 0.5) * size).sum();
            Point2D::new(sx / n, sy / n)
        })
        .collect()
}

/// Cuts `r` into four tiles at pixel column `cx` and row `cy`.
fn split4(r: &CrownRaster, cx: usize, cy: usize) -> BTreeMap<TileAddress, CrownRaster> {
    let size = r.bounds.width() / r.width as f64;
    let mut out = BTreeMap::new();
    for (ty, rows) in [0..cy, cy..r.height].into_iter().enumerate() {
        for (tx, cols) in [0..cx, cx..r.width].into_iter().enumerate() {
            let px: Vec<u8> =
                rows.clone().flat_map(|row| cols.clone().map(move |col| (row, col))).map(|(row, col)| r.get(col, row)).collect();
            let bounds = Rect::new(
                r.bounds.min.x + cols.start as f64 * size,
                r.bounds.max.y - rows.end as f64 * size,
                r.bounds.min.x + cols.end as f64 * size,
                r.bounds.max.y - rows.start as f64 * size,
            );
            let a = addr(tx as u32, ty as u32);
            out.insert(a.clone(), CrownRaster::new(a, cols.len(), rows.len(), bounds, px).expect("valid tile"));
        }
    }
    out
}

/// Pairs every expected centroid with a distinct found one within `tol`.
fn matched(expected: &[Point2D], found: &[Point2D], tol: f64) -> bool {
    let mut used = vec![false; found.len()];
    expected.iter().all(|e| {
        let best = (0..found.len())
            .filter(|&j| !used[j])
            .map(|j| (j, (found[j].x - e.x).abs().max((found[j].y - e.y).abs())))
            .filter(|&(_, d)| d <= tol)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        best.map(|(j, _)| used[j] = true).is_some()
    })
}

pub fn run() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x7eee);
    let (mut crowns, mut cut) = (0, 0);
    for case in 0..RASTERS {
        let r = random_raster(&mut rng);
        let params = CrownParams { min_pixels: rng.random_range(1..=4), ..CrownParams::default() };
        let want = oracle_crowns(&r, params.min_pixels);
        let found: Vec<Point2D> = detect_crowns(&r, &params).iter().map(|t| t.position).collect();
        ensure!(found.len() == want.len(), "raster {case}: {} crowns, oracle {}", found.len(), want.len());
        ensure!(matched(&want, &found, 1e-9), "raster {case}: crown centroids differ from the oracle");

        let size = r.bounds.width() / r.width as f64;
        let (cx, cy) = (rng.random_range(1..r.width), rng.random_range(1..r.height));
        let tiles = split4(&r, cx, cy);
        let per_tile: BTreeMap<TileAddress, _> = tiles.iter().map(|(a, t)| (a.clone(), detect_crowns(t, &params))).collect();
        cut += per_tile.values().map(Vec::len).sum::<usize>();
        let merged = merge_cross_tile(&per_tile, &tiles, &params).map_err(|e| format!("raster {case}: {e}"))?;
        let merged: Vec<Point2D> = merged.iter().map(|t| t.position).collect();
        ensure!(merged.len() == want.len(), "raster {case}: {} crowns after the split, {} whole", merged.len(), want.len());
        ensure!(matched(&want, &merged, CENTROID_TOL_PX * size), "raster {case}: merged centroids drift over half a pixel");
        crowns += want.len();
    }
    Ok(format!("{RASTERS} rasters, {crowns} crowns match the components oracle; 4-way splits ({cut} per-tile pieces) merge back"))
}
