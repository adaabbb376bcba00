//! Water bodies: extraction, level estimation from shore terrain, surface
//! meshing per tile, and shore snapping of the terrain mesh.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    clip_polygon_to_rect, earcut_triangulate, point_in_triangle, point_segment_distance, segments_intersect, GeomError, Point2D,
    PolygonWithHoles, Rect,
};
use crate::ingest::FeatureCollection;
use crate::landcover::{LandCoverRaster, WATER};
use crate::terrain::{HeightField, TerrainMesh};

/// Terrain near a shore is raised to this distance below the water surface.
pub const SHORE_DROP: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydroError {
    #[error("no valid terrain samples around the water body")]
    NoValidShoreSamples,
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShoreParams {
    /// Outward offset of shore samples from the outer ring, meters.
    pub offset: f64,
    /// Percentile of the shore samples taken as the water level.
    pub percentile: f64,
}

impl Default for ShoreParams {
    fn default() -> Self {
        ShoreParams { offset: 2.0, percentile: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterBody {
    pub region: PolygonWithHoles,
    pub surface_elevation: f64,
    pub shore_samples: Vec<(Point2D, f64)>,
}

impl WaterBody {
    /// Samples the terrain just outside the outer ring and takes a low
    /// percentile of the valid samples as the level.
    pub fn estimate(region: PolygonWithHoles, hf: &HeightField, params: &ShoreParams) -> Result<WaterBody, HydroError> {
        let shore_samples: Vec<(Point2D, f64)> =
            shore_points(&region, params.offset).into_iter().filter_map(|p| hf.sample(p).ok().map(|z| (p, z))).collect();
        let zs: Vec<f64> = shore_samples.iter().map(|s| s.1).collect();
        let surface_elevation = percentile(&zs, params.percentile).ok_or(HydroError::NoValidShoreSamples)?;
        Ok(WaterBody { region, surface_elevation, shore_samples })
    }

    /// Shore samples and the chosen level as a whitespace-separated table.
    pub fn audit_table(&self) -> String {
        let mut out = format!("# level {:.3}\n# x y z\n", self.surface_elevation);
        for (p, z) in &self.shore_samples {
            let _ = writeln!(out, "{:.3} {:.3} {:.3}", p.x, p.y, z);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WaterMesh {
    pub body_id: usize,
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl WaterMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn planar_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
            })
            .sum()
    }

    /// Vertices on edges used by a single triangle.
    pub fn boundary_vertices(&self) -> Vec<u32> {
        let mut edges: std::collections::HashMap<(u32, u32), u32> = std::collections::HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut out: Vec<u32> = edges.into_iter().filter(|&(_, n)| n == 1).flat_map(|((a, b), _)| [a, b]).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

pub fn extract_water_polygons(fc: &FeatureCollection) -> Vec<PolygonWithHoles> {
    fc.polygons().filter(|p| p.class_code == WATER).cloned().collect()
}

/// Nearest-rank percentile; `None` for an empty sample.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}

fn outward_normal(a: Point2D, b: Point2D) -> Point2D {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len = dx.hypot(dy);
    Point2D::new(dy / len, -dx / len)
}

/// Outer-ring vertices and edge midpoints pushed `offset` meters outward.
/// Vertices move along the mean of their two edge normals.
pub fn shore_points(region: &PolygonWithHoles, offset: f64) -> Vec<Point2D> {
    let v = region.outer().vertices();
    let n = v.len();
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let (prev, cur, next) = (v[(i + n - 1) % n], v[i], v[(i + 1) % n]);
        let (n0, n1) = (outward_normal(prev, cur), outward_normal(cur, next));
        let (mx, my) = (n0.x + n1.x, n0.y + n1.y);
        let len = mx.hypot(my);
        let dir = if len > 1e-12 { Point2D::new(mx / len, my / len) } else { n1 };
        out.push(Point2D::new(cur.x + offset * dir.x, cur.y + offset * dir.y));
        let mid = Point2D::new(0.5 * (cur.x + next.x), 0.5 * (cur.y + next.y));
        out.push(Point2D::new(mid.x + offset * n1.x, mid.y + offset * n1.y));
    }
    out
}

pub fn estimate_water_level(body: &PolygonWithHoles, hf: &HeightField) -> Result<f64, HydroError> {
    WaterBody::estimate(body.clone(), hf, &ShoreParams::default()).map(|b| b.surface_elevation)
}

/// Clips the body to `tile`, triangulates the pieces and lifts every vertex
/// to the body's level.
pub fn build_water_mesh(body: &WaterBody, body_id: usize, tile: &Rect) -> Result<WaterMesh, HydroError> {
    let mut mesh = WaterMesh { body_id, ..Default::default() };
    for piece in clip_polygon_to_rect(&body.region, tile) {
        let tri = earcut_triangulate(&piece);
        let base = mesh.vertices.len() as u32;
        mesh.vertices.extend(tri.vertices.iter().map(|p| [p.x, p.y, body.surface_elevation]));
        mesh.triangles.extend(tri.triangles.iter().map(|t| t.map(|i| i + base)));
    }
    Ok(mesh)
}

/// Connected group of water cells with its row runs merged into rectangles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRegion {
    pub cell_count: usize,
    pub rects: Vec<Rect>,
    pub bounds: Rect,
}

/// 8-connected components of water cells. Each component is returned as
/// row runs, with identical runs on consecutive rows merged.
pub fn aggregate_water_cells(raster: &LandCoverRaster) -> Vec<CellRegion> {
    let n = raster.size;
    let mut label = vec![usize::MAX; n * n];
    let mut regions = Vec::new();
    for start in 0..n * n {
        if raster.cells[start] != WATER || label[start] != usize::MAX {
            continue;
        }
        let id = regions.len();
        let mut members = Vec::new();
        let mut queue = VecDeque::from([start]);
        label[start] = id;
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let (c, r) = ((i % n) as i64, (i / n) as i64);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nc, nr) = (c + dc, r + dr);
                    if nc < 0 || nr < 0 || nc >= n as i64 || nr >= n as i64 {
                        continue;
                    }
                    let j = nr as usize * n + nc as usize;
                    if raster.cells[j] == WATER && label[j] == usize::MAX {
                        label[j] = id;
                        queue.push_back(j);
                    }
                }
            }
        }
        members.sort_unstable();
        regions.push(merge_runs(raster, &members));
    }
    regions
}

fn merge_runs(raster: &LandCoverRaster, members: &[usize]) -> CellRegion {
    let n = raster.size;
    // (row, col_start, col_end_exclusive)
    let mut runs: Vec<(usize, usize, usize)> = Vec::new();
    for &i in members {
        let (c, r) = (i % n, i / n);
        match runs.last_mut() {
            Some(run) if run.0 == r && run.2 == c => run.2 += 1,
            _ => runs.push((r, c, c + 1)),
        }
    }
    // (row_start, row_end_exclusive, col_start, col_end_exclusive)
    let mut blocks: Vec<(usize, usize, usize, usize)> = Vec::new();
    for (r, c0, c1) in runs {
        if let Some(b) = blocks.iter_mut().find(|b| b.1 == r && b.2 == c0 && b.3 == c1) {
            b.1 += 1;
        } else {
            blocks.push((r, r + 1, c0, c1));
        }
    }
    let (w, h) = (raster.cell_width(), raster.cell_height());
    let (x0, y0) = (raster.bounds.min.x, raster.bounds.min.y);
    let rects: Vec<Rect> = blocks
        .iter()
        .map(|&(r0, r1, c0, c1)| Rect::new(x0 + c0 as f64 * w, y0 + r0 as f64 * h, x0 + c1 as f64 * w, y0 + r1 as f64 * h))
        .collect();
    let bounds = rects.iter().skip(1).fold(rects[0], |acc, r| acc.union(r));
    CellRegion { cell_count: members.len(), rects, bounds }
}

fn triangle_segment_distance(tri: [Point2D; 3], a: Point2D, b: Point2D) -> f64 {
    let [p, q, r] = tri;
    if point_in_triangle(a, p, q, r) || point_in_triangle(b, p, q, r) {
        return 0.0;
    }
    let edges = [(p, q), (q, r), (r, p)];
    if edges.iter().any(|&(u, v)| segments_intersect(u, v, a, b)) {
        return 0.0;
    }
    let mut d = f64::INFINITY;
    for (u, v) in edges {
        d = d.min(point_segment_distance(a, u, v)).min(point_segment_distance(b, u, v));
    }
    for t in tri {
        d = d.min(point_segment_distance(t, a, b));
    }
    d
}

/// Raises terrain vertices below a water level to `level - SHORE_DROP` for
/// every terrain triangle within `reach` meters of the water footprint
/// boundary inside the terrain tile. Returns the number of raised vertices.
pub fn snap_shore(terrain: &mut TerrainMesh, bodies: &[WaterBody], reach: f64) -> usize {
    let mut floor = vec![f64::NEG_INFINITY; terrain.vertices.len()];
    for body in bodies {
        let target = body.surface_elevation - SHORE_DROP;
        let segments: Vec<(Point2D, Point2D)> = clip_polygon_to_rect(&body.region, &terrain.bounds)
            .iter()
            .flat_map(|piece| piece.rings().flat_map(|r| r.edges()).collect::<Vec<_>>())
            .collect();
        if segments.is_empty() {
            continue;
        }
        for t in &terrain.triangles {
            let pts = t.map(|i| {
                let v = terrain.vertices[i as usize];
                Point2D::new(v[0], v[1])
            });
            let tb = Rect::from_points(pts).expect("three points").expand(reach);
            let near = segments.iter().any(|&(a, b)| {
                let sb = Rect::from_points([a, b]).expect("two points");
                sb.touches(&tb) && triangle_segment_distance(pts, a, b) <= reach
            });
            if near {
                for &i in t {
                    floor[i as usize] = floor[i as usize].max(target);
                }
            }
        }
    }
    let mut raised = 0;
    for (v, f) in terrain.vertices.iter_mut().zip(floor) {
        if v[2] < f {
            v[2] = f;
            raised += 1;
        }
    }
    raised
}
