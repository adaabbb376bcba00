use geoscene::geom::{Point2D, Rect};
use geoscene::hydro::{aggregate_water_cells, build_water_mesh, snap_shore, ShoreParams, WaterBody, WaterMesh, SHORE_DROP};
use geoscene::landcover::{LandCoverRaster, GRASS, WATER};
use geoscene::terrain::{build_lod_mesh, HeightField, LodParams, TerrainMesh};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::oracle::{barycentric, boundary_distance, components8, even_odd, polygon_area, random_polygon};
use crate::{ensure, Outcome};

const CONTAIN_EPS: f64 = 0.01;
const AREA_REL_TOL: f64 = 1e-6;
const SCENES: usize = 12;
const RASTERS: usize = 30;
const TILE: f64 = 200.0;
const CELL: f64 = 2.0;

fn terrain_height(p: Point2D) -> f64 {
    5.0 + 2.0 * (p.x / 30.0).sin() + 1.5 * (p.y / 25.0).cos() + 0.01 * p.x
}

fn surface_at(mesh: &TerrainMesh, p: Point2D) -> Option<f64> {
    mesh.triangles.iter().find_map(|t| {
        let v = t.map(|i| mesh.vertices[i as usize]);
        let w = barycentric(p, v.map(|q| Point2D::new(q[0], q[1])), 1e-9)?;
        Some(w[0] * v[0][2] + w[1] * v[1][2] + w[2] * v[2][2])
    })
}

fn area(mesh: &WaterMesh) -> f64 {
    mesh.planar_area()
}

fn bodies(rng: &mut StdRng, hf: &HeightField) -> Vec<(WaterBody, Vec<Vec<Point2D>>)> {
    let mut out: Vec<(WaterBody, Vec<Vec<Point2D>>, Point2D, f64)> = Vec::new();
    for _ in 0..rng.random_range(1..=4) {
        let c = Point2D::new(rng.random_range(-20.0..TILE + 20.0), rng.random_range(-20.0..TILE + 20.0));
        let r = rng.random_range(15.0..45.0);
        if out.iter().any(|(_, _, q, rq)| q.distance(c) < r + rq + 2.0 * CELL) {
            continue;
        }
        let (poly, rings) = random_polygon(rng, c, r, 2, WATER);
        if let Ok(body) = WaterBody::estimate(poly, hf, &ShoreParams::default()) {
            out.push((body, rings, c, r));
        }
    }
    out.into_iter().map(|(b, rings, _, _)| (b, rings)).collect()
}

fn surfaces(rng: &mut StdRng) -> Outcome {
    let tile = Rect::new(0.0, 0.0, TILE, TILE);
    let hf = HeightField::from_fn(130, 130, Point2D::new(-30.0, -30.0), CELL, terrain_height);
    let raster = LandCoverRaster::filled(64, tile, GRASS);
    let (mut count, mut boundary, mut raised) = (0, 0, 0);
    for scene in 0..SCENES {
        let found = bodies(rng, &hf);
        for (id, (body, rings)) in found.iter().enumerate() {
            let level = body.surface_elevation;
            let full = build_water_mesh(body, id, &tile).map_err(|e| e.to_string())?;
            for v in &full.vertices {
                let p = Point2D::new(v[0], v[1]);
                ensure!(v[2] == level, "scene {scene} body {id}: vertex z {} against level {level}", v[2]);
                ensure!(tile.expand(CONTAIN_EPS).contains(p), "scene {scene} body {id}: vertex {p:?} outside the tile");
                ensure!(
                    even_odd(p, rings) || boundary_distance(p, rings) <= CONTAIN_EPS,
                    "scene {scene} body {id}: vertex {p:?} outside the footprint"
                );
            }

            let (cx, cy) = (rng.random_range(40.0..160.0), rng.random_range(40.0..160.0));
            let quads =
                [Rect::new(0.0, 0.0, cx, cy), Rect::new(cx, 0.0, TILE, cy), Rect::new(0.0, cy, cx, TILE), Rect::new(cx, cy, TILE, TILE)];
            let mut parts = 0.0;
            for q in &quads {
                parts += area(&build_water_mesh(body, id, q).map_err(|e| e.to_string())?);
            }
            let whole = area(&full);
            if whole > 0.0 {
                let rel = (parts - whole).abs() / whole;
                ensure!(rel <= AREA_REL_TOL, "scene {scene} body {id}: quadrant areas off by {rel:e} relative");
            }
            let bb = body.region.bounds();
            if tile.contains_rect(&bb, 0.0) {
                let oracle = polygon_area(rings);
                let rel = (whole - oracle).abs() / oracle;
                ensure!(rel <= AREA_REL_TOL, "scene {scene} body {id}: area {whole} against {oracle}");
            }
            count += 1;
        }

        let eye = [rng.random_range(0.0..TILE), rng.random_range(0.0..TILE), 30.0];
        let mut terrain = build_lod_mesh(&hf, &raster, &LodParams { viewpoint: eye, base_cell: 100.0, max_depth: 5, split_threshold: 0.8 });
        let list: Vec<WaterBody> = found.iter().map(|(b, _)| b.clone()).collect();
        raised += snap_shore(&mut terrain, &list, CELL);
        for (id, body) in list.iter().enumerate() {
            let mesh = build_water_mesh(body, id, &tile).map_err(|e| e.to_string())?;
            for i in mesh.boundary_vertices() {
                let v = mesh.vertices[i as usize];
                let p = Point2D::new(v[0], v[1]);
                let z = surface_at(&terrain, p).ok_or_else(|| format!("scene {scene}: no terrain under {p:?}"))?;
                ensure!(
                    z >= body.surface_elevation - SHORE_DROP - 1e-9,
                    "scene {scene} body {id}: shore gap of {:.4} m at {p:?}",
                    body.surface_elevation - SHORE_DROP - z
                );
                boundary += 1;
            }
        }
    }
    ensure!(count > 0, "no water bodies generated");
    Ok(format!(
        "{count} bodies planar and contained, quadrant areas additive, {boundary} shore vertices sealed ({raised} terrain vertices raised)"
    ))
}

fn aggregation(rng: &mut StdRng) -> Outcome {
    let mut regions = 0;
    for case in 0..RASTERS {
        let n = rng.random_range(8..48);
        let bounds = Rect::new(0.0, 0.0, n as f64 * 3.0, n as f64 * 3.0);
        let mut raster = LandCoverRaster::filled(n, bounds, GRASS);
        let p = rng.random_range(0.1..0.6);
        for cell in raster.cells.iter_mut() {
            if rng.random_bool(p) {
                *cell = WATER;
            }
        }
        let got = aggregate_water_cells(&raster);
        let oracle = components8(n, n, |i| raster.cells[i] == WATER);
        ensure!(got.len() == oracle.len(), "case {case}: {} regions, oracle {}", got.len(), oracle.len());
        let mut a: Vec<usize> = got.iter().map(|r| r.cell_count).collect();
        let mut b: Vec<usize> = oracle.iter().map(Vec::len).collect();
        a.sort_unstable();
        b.sort_unstable();
        ensure!(a == b, "case {case}: region sizes differ");
        let cell_area = 9.0;
        for r in &got {
            let covered: f64 = r.rects.iter().map(Rect::area).sum();
            ensure!(
                (covered / cell_area - r.cell_count as f64).abs() < 1e-6,
                "case {case}: rects cover {covered} m2 for {} cells",
                r.cell_count
            );
        }
        regions += got.len();
    }
    Ok(format!("{regions} cell regions match union-find"))
}

pub fn run() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x4a7e);
    Ok([surfaces(&mut rng)?, aggregation(&mut rng)?].join("; "))
}
