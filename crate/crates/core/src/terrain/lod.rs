use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HeightField;
use crate::geom::{ClassCode, Point2D, Rect};
use crate::landcover::{class_at, LandCoverRaster, UNKNOWN};

/// Finest quadtree level accepted; deeper requests are clamped.
pub const MAX_SUPPORTED_DEPTH: u32 = 12;

/// Samples per leaf side used for error estimates.
const ERROR_SAMPLES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LodParams {
    pub viewpoint: [f64; 3],
    /// Edge length of the root cells tiling the terrain tile.
    pub base_cell: f64,
    pub max_depth: u32,
    /// A node splits while `node_size / distance` exceeds this ratio.
    pub split_threshold: f64,
}

impl Default for LodParams {
    fn default() -> Self {
        LodParams { viewpoint: [0.0, 0.0, 2.0], base_cell: 1000.0, max_depth: 8, split_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafInfo {
    pub depth: u32,
    pub rect: Rect,
    /// Upper bound of `|hf - mesh|` over the leaf.
    pub error: f64,
    /// Error estimates of the enclosing nodes from the root down to the leaf.
    pub ancestor_errors: Vec<f64>,
    pub first_triangle: usize,
    pub triangle_count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TerrainMesh {
    pub bounds: Rect,
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
    pub classes: Vec<ClassCode>,
    pub leaves: Vec<LeafInfo>,
}

impl TerrainMesh {
    pub fn triangle_points(&self, t: usize) -> [[f64; 3]; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn planar_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
            })
            .sum()
    }

    /// Undirected edges used by exactly one triangle.
    pub fn open_edges(&self) -> Vec<(u32, u32)> {
        let mut count: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut open: Vec<(u32, u32)> = count.into_iter().filter(|&(_, n)| n == 1).map(|(e, _)| e).collect();
        open.sort_unstable();
        open
    }

    /// Plain-text mesh dump for inspection: `v x y z` and 1-based `f a b c`.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {:.3} {:.3} {:.3}", v[0], v[1], v[2]);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }
}

/// Geometry of the root tiling and its finest-level lattice.
struct Layout {
    bounds: Rect,
    roots_x: usize,
    roots_y: usize,
    max_depth: u32,
    /// Finest cells per root side.
    fine: usize,
}

impl Layout {
    fn fine_w(&self) -> usize {
        self.roots_x * self.fine
    }

    fn fine_h(&self) -> usize {
        self.roots_y * self.fine
    }

    fn root_w(&self) -> f64 {
        self.bounds.width() / self.roots_x as f64
    }

    fn root_h(&self) -> f64 {
        self.bounds.height() / self.roots_y as f64
    }

    /// Node footprint in finest cells.
    fn span(&self, depth: u32) -> usize {
        self.fine >> depth
    }

    /// Position of a lattice point; the vertex lattice has twice the finest
    /// resolution so leaf centers and edge midpoints are addressable.
    fn lattice_point(&self, ix: usize, iy: usize) -> Point2D {
        let per_root = 2 * self.fine;
        Point2D::new(
            self.bounds.min.x + ix as f64 * self.root_w() / per_root as f64,
            self.bounds.min.y + iy as f64 * self.root_h() / per_root as f64,
        )
    }

    fn node_rect(&self, depth: u32, fx: usize, fy: usize) -> Rect {
        let s = self.span(depth);
        let a = self.lattice_point(2 * fx, 2 * fy);
        let b = self.lattice_point(2 * (fx + s), 2 * (fy + s));
        Rect::new(a.x, a.y, b.x, b.y)
    }
}

fn height_at(hf: &HeightField, p: Point2D) -> f64 {
    hf.sample_lenient(p, 0.0)
}

fn wants_split(layout: &Layout, hf: &HeightField, p: &LodParams, depth: u32, fx: usize, fy: usize) -> bool {
    if depth >= layout.max_depth {
        return false;
    }
    let r = layout.node_rect(depth, fx, fy);
    let c = r.center();
    let z = height_at(hf, c);
    let d = ((c.x - p.viewpoint[0]).powi(2) + (c.y - p.viewpoint[1]).powi(2) + (z - p.viewpoint[2]).powi(2)).sqrt();
    let size = r.width().max(r.height());
    d == 0.0 || size / d > p.split_threshold
}

/// Depths of the viewpoint-refined leaves of one root, as `(depth, fx, fy)`.
fn refine_root(layout: &Layout, hf: &HeightField, p: &LodParams, rx: usize, ry: usize) -> Vec<(u32, usize, usize)> {
    let mut out = Vec::new();
    let mut stack = vec![(0u32, rx * layout.fine, ry * layout.fine)];
    while let Some((d, fx, fy)) = stack.pop() {
        if wants_split(layout, hf, p, d, fx, fy) {
            let h = layout.span(d + 1);
            stack.extend([(d + 1, fx, fy), (d + 1, fx + h, fy), (d + 1, fx, fy + h), (d + 1, fx + h, fy + h)]);
        } else {
            out.push((d, fx, fy));
        }
    }
    out
}

struct DepthGrid {
    w: usize,
    h: usize,
    cells: Vec<u8>,
}

impl DepthGrid {
    fn get(&self, x: usize, y: usize) -> u8 {
        self.cells[y * self.w + x]
    }

    fn fill(&mut self, span: usize, fx: usize, fy: usize, d: u8) {
        for y in fy..fy + span {
            self.cells[y * self.w + fx..y * self.w + fx + span].fill(d);
        }
    }

    fn is_leaf_origin(&self, layout: &Layout, x: usize, y: usize) -> bool {
        let s = layout.span(self.get(x, y) as u32);
        x % s == 0 && y % s == 0
    }

    /// Deepest leaf adjacent to each side of the node, in order S, E, N, W.
    fn neighbor_depths(&self, span: usize, fx: usize, fy: usize) -> [Option<u8>; 4] {
        let max_over = |cells: &mut dyn Iterator<Item = (usize, usize)>| cells.map(|(x, y)| self.get(x, y)).max();
        let south = if fy > 0 { max_over(&mut (fx..fx + span).map(|x| (x, fy - 1))) } else { None };
        let east = if fx + span < self.w { max_over(&mut (fy..fy + span).map(|y| (fx + span, y))) } else { None };
        let north = if fy + span < self.h { max_over(&mut (fx..fx + span).map(|x| (x, fy + span))) } else { None };
        let west = if fx > 0 { max_over(&mut (fy..fy + span).map(|y| (fx - 1, y))) } else { None };
        [south, east, north, west]
    }
}

/// Splits leaves until adjacent leaves differ by at most one level.
fn balance(layout: &Layout, grid: &mut DepthGrid) {
    loop {
        let mut changed = false;
        for y in 0..grid.h {
            for x in 0..grid.w {
                if !grid.is_leaf_origin(layout, x, y) {
                    continue;
                }
                let d = grid.get(x, y);
                let span = layout.span(d as u32);
                let deepest = grid.neighbor_depths(span, x, y).into_iter().flatten().max().unwrap_or(0);
                if deepest > d + 1 {
                    grid.fill(span, x, y, d + 1);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Triangles of one leaf as lattice coordinates, counter-clockwise.
fn leaf_triangles(span: usize, fx: usize, fy: usize, split_sides: [bool; 4]) -> Vec<[(usize, usize); 3]> {
    let (x0, y0, x1, y1) = (2 * fx, 2 * fy, 2 * (fx + span), 2 * (fy + span));
    let (sw, se, ne, nw) = ((x0, y0), (x1, y0), (x1, y1), (x0, y1));
    if !split_sides.iter().any(|&s| s) {
        return vec![[sw, se, ne], [sw, ne, nw]];
    }
    let (mx, my) = (fx * 2 + span, fy * 2 + span);
    let c = (mx, my);
    let sides = [(sw, se, (mx, y0)), (se, ne, (x1, my)), (ne, nw, (mx, y1)), (nw, sw, (x0, my))];
    let mut out = Vec::with_capacity(8);
    for (k, (a, b, m)) in sides.into_iter().enumerate() {
        if split_sides[k] {
            out.push([c, a, m]);
            out.push([c, m, b]);
        } else {
            out.push([c, a, b]);
        }
    }
    out
}

/// Interpolates the piecewise-linear surface of `tris` at `q`.
fn surface_at(tris: &[[[f64; 3]; 3]], q: Point2D) -> f64 {
    let mut best = (f64::NEG_INFINITY, 0.0);
    for [a, b, c] in tris {
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((q.x - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (q.y - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (q.y - a[1]) - (q.x - a[0]) * (b[1] - a[1])) / det;
        let l0 = 1.0 - l1 - l2;
        let margin = l0.min(l1).min(l2);
        if margin > best.0 {
            best = (margin, l0 * a[2] + l1 * b[2] + l2 * c[2]);
        }
        if margin >= 0.0 {
            break;
        }
    }
    best.1
}

fn max_deviation(hf: &HeightField, rect: &Rect, tris: &[[[f64; 3]; 3]]) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..ERROR_SAMPLES {
        for i in 0..ERROR_SAMPLES {
            let t = |k: usize| k as f64 / (ERROR_SAMPLES - 1) as f64;
            let q = Point2D::new(rect.min.x + t(i) * rect.width(), rect.min.y + t(j) * rect.height());
            worst = worst.max((height_at(hf, q) - surface_at(tris, q)).abs());
        }
    }
    worst
}

fn lift(layout: &Layout, hf: &HeightField, tri: [(usize, usize); 3]) -> [[f64; 3]; 3] {
    tri.map(|(ix, iy)| {
        let p = layout.lattice_point(ix, iy);
        [p.x, p.y, height_at(hf, p)]
    })
}

/// Error estimate of every node, keyed by `(depth, fx, fy)`. Leaves measure
/// their actual triangulation; inner nodes take the larger of their own
/// two-triangle approximation error and their children's estimates.
fn node_errors(
    layout: &Layout,
    hf: &HeightField,
    grid: &DepthGrid,
    leaf_tris: &HashMap<(usize, usize), Vec<[[f64; 3]; 3]>>,
) -> HashMap<(u32, usize, usize), f64> {
    fn visit(
        layout: &Layout,
        hf: &HeightField,
        grid: &DepthGrid,
        leaf_tris: &HashMap<(usize, usize), Vec<[[f64; 3]; 3]>>,
        d: u32,
        fx: usize,
        fy: usize,
        out: &mut HashMap<(u32, usize, usize), f64>,
    ) -> f64 {
        let rect = layout.node_rect(d, fx, fy);
        let e = if grid.get(fx, fy) as u32 == d {
            max_deviation(hf, &rect, &leaf_tris[&(fx, fy)])
        } else {
            let h = layout.span(d + 1);
            let own = max_deviation(
                hf,
                &rect,
                &leaf_triangles(layout.span(d), fx, fy, [false; 4]).into_iter().map(|t| lift(layout, hf, t)).collect::<Vec<_>>(),
            );
            [(fx, fy), (fx + h, fy), (fx, fy + h), (fx + h, fy + h)]
                .into_iter()
                .map(|(cx, cy)| visit(layout, hf, grid, leaf_tris, d + 1, cx, cy, out))
                .fold(own, f64::max)
        };
        out.insert((d, fx, fy), e);
        e
    }

    let roots: Vec<(usize, usize)> = (0..layout.roots_y).flat_map(|ry| (0..layout.roots_x).map(move |rx| (rx, ry))).collect();
    roots
        .par_iter()
        .map(|&(rx, ry)| {
            let mut out = HashMap::new();
            visit(layout, hf, grid, leaf_tris, 0, rx * layout.fine, ry * layout.fine, &mut out);
            out
        })
        .reduce(HashMap::new, |mut a, b| {
            a.extend(b);
            a
        })
}

/// Builds a crack-free restricted-quadtree mesh over the raster's bounds.
///
/// Root cells of about `base_cell` meters tile the bounds and split while
/// `node_size / distance(node_center, viewpoint)` exceeds the threshold.
/// Leaves are then split until neighbors differ by at most one level. A leaf
/// with no deeper neighbor is two triangles split along its south-west to
/// north-east diagonal; otherwise it is a fan around its center that picks up
/// the midpoints of sides shared with deeper neighbors.
pub fn build_lod_mesh(hf: &HeightField, raster: &LandCoverRaster, p: &LodParams) -> TerrainMesh {
    let bounds = raster.bounds;
    let max_depth = p.max_depth.min(MAX_SUPPORTED_DEPTH);
    if p.max_depth > MAX_SUPPORTED_DEPTH {
        log::warn!("LOD depth {} clamped to {MAX_SUPPORTED_DEPTH}", p.max_depth);
    }
    let base = if p.base_cell > 0.0 { p.base_cell } else { bounds.width().max(bounds.height()) };
    let layout = Layout {
        bounds,
        roots_x: ((bounds.width() / base).round() as usize).max(1),
        roots_y: ((bounds.height() / base).round() as usize).max(1),
        max_depth,
        fine: 1 << max_depth,
    };

    let roots: Vec<(usize, usize)> = (0..layout.roots_y).flat_map(|ry| (0..layout.roots_x).map(move |rx| (rx, ry))).collect();
    let refined: Vec<Vec<(u32, usize, usize)>> = roots.par_iter().map(|&(rx, ry)| refine_root(&layout, hf, p, rx, ry)).collect();
    let mut grid = DepthGrid { w: layout.fine_w(), h: layout.fine_h(), cells: vec![0; layout.fine_w() * layout.fine_h()] };
    for (d, fx, fy) in refined.into_iter().flatten() {
        grid.fill(layout.span(d), fx, fy, d as u8);
    }
    balance(&layout, &mut grid);

    let mut leaf_list = Vec::new();
    for y in 0..grid.h {
        for x in 0..grid.w {
            if grid.is_leaf_origin(&layout, x, y) {
                leaf_list.push((grid.get(x, y) as u32, x, y));
            }
        }
    }
    let leaf_lattice: Vec<Vec<[(usize, usize); 3]>> = leaf_list
        .iter()
        .map(|&(d, fx, fy)| {
            let span = layout.span(d);
            let split = grid.neighbor_depths(span, fx, fy).map(|n| n.is_some_and(|nd| nd as u32 > d));
            leaf_triangles(span, fx, fy, split)
        })
        .collect();
    let leaf_tris: HashMap<(usize, usize), Vec<[[f64; 3]; 3]>> = leaf_list
        .par_iter()
        .zip(leaf_lattice.par_iter())
        .map(|(&(_, fx, fy), tris)| ((fx, fy), tris.iter().map(|&t| lift(&layout, hf, t)).collect()))
        .collect();
    let errors = node_errors(&layout, hf, &grid, &leaf_tris);

    let mut mesh = TerrainMesh { bounds, ..Default::default() };
    let mut index: HashMap<(usize, usize), u32> = HashMap::new();
    for (&(d, fx, fy), tris) in leaf_list.iter().zip(&leaf_lattice) {
        let first_triangle = mesh.triangles.len();
        for tri in tris {
            let ids = tri.map(|key| {
                *index.entry(key).or_insert_with(|| {
                    let p2 = layout.lattice_point(key.0, key.1);
                    mesh.vertices.push([p2.x, p2.y, height_at(hf, p2)]);
                    mesh.classes.push(class_at(raster, p2).unwrap_or(UNKNOWN));
                    (mesh.vertices.len() - 1) as u32
                })
            });
            mesh.triangles.push(ids);
        }
        let ancestor_errors = (0..=d)
            .map(|ad| {
                let s = layout.span(ad);
                errors[&(ad, fx / s * s, fy / s * s)]
            })
            .collect();
        mesh.leaves.push(LeafInfo {
            depth: d,
            rect: layout.node_rect(d, fx, fy),
            error: errors[&(d, fx, fy)],
            ancestor_errors,
            first_triangle,
            triangle_count: tris.len(),
        });
    }
    mesh
}
