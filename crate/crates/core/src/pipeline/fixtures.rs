//! Synthetic offline source set with a known ground truth.
//!
//! Every source is written in its canonical fixture format under one
//! directory, next to a `geoscene.toml` that points at it and a
//! `ground_truth.json` listing what a generation run must recover.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{GeoBBox, PipelineConfig, PipelineError};
use crate::buildings::{encode_b3dm, write_b3dm, BuildingMesh, ColorRaster};
use crate::geom::{point_in_polygon, GeoPoint, LocalFrame, Point2D, PolygonWithHoles, Rect, SceneProjection};
use crate::ingest::{tiles_covering, write_geojson, SourceConfig, SourceKind, TileAddress};
use crate::landcover::{ClassTable, GRASS, WATER};
use crate::terrain::HeightField;
use crate::transit::{write_replay, Route, Stop, VehicleFix};
use crate::vegetation::CrownRaster;

const ROAD: u8 = 3;
const ROAD_WIDTH: f64 = 8.0;
const NODATA: f64 = -9999.0;
const GROUND_RGB: [u8; 3] = [96, 124, 72];
const WATER_RGB: [u8; 3] = [52, 92, 150];
const ROAD_RGB: [u8; 3] = [104, 104, 108];
/// Crown raster values for small, medium and large trees.
const CROWN_VALUES: [u8; 3] = [60, 128, 200];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub origin: GeoPoint,
    /// Edge of the square region in meters.
    pub size_m: f64,
    pub zoom: u8,
    pub seed: u64,
    pub buildings: usize,
    pub water_bodies: usize,
    pub trees: usize,
    /// Trees centered on a tile seam, included in `trees`.
    pub seam_trees: usize,
    /// Square nodata holes punched into the elevation grid.
    pub elevation_gaps: usize,
    pub transit: bool,
    pub cell_size: f64,
    pub grid_tile: f64,
    pub aerial_pixel: f64,
    pub crown_pixels: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            origin: GeoPoint { lat: 52.0880, lon: 5.1100 },
            size_m: 1000.0,
            zoom: 16,
            seed: 7,
            buildings: 10,
            water_bodies: 2,
            trees: 50,
            seam_trees: 6,
            elevation_gaps: 3,
            transit: true,
            cell_size: 5.0,
            grid_tile: 250.0,
            aerial_pixel: 2.5,
            crown_pixels: 256,
        }
    }
}

impl FixtureSpec {
    /// Same region with nothing on it but grass and terrain.
    pub fn empty() -> Self {
        FixtureSpec { buildings: 0, water_bodies: 0, trees: 0, seam_trees: 0, elevation_gaps: 0, transit: false, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bbox: String,
    pub seed: u64,
    pub counts: BTreeMap<String, usize>,
    pub roof_colors: BTreeMap<String, [u8; 3]>,
    pub seam_trees: usize,
    pub nodata_cells: usize,
    pub water_holes: usize,
    /// Crown centers and radii as `[x, y, r]` in scene meters.
    pub trees: Vec<[f64; 3]>,
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<GroundTruth, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }
}

/// Paths of a written fixture set.
#[derive(Debug, Clone)]
pub struct FixtureSet {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub ground_truth: GroundTruth,
    pub bbox: GeoBBox,
}

struct Tree {
    center: Point2D,
    radius: f64,
    value: u8,
}

struct Layout {
    bounds: Rect,
    roads: Vec<Rect>,
    lakes: Vec<PolygonWithHoles>,
    buildings: Vec<(BuildingMesh, Rect, [u8; 3])>,
    trees: Vec<Tree>,
    gaps: Vec<Rect>,
}

fn out_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Output { path: path.to_path_buf(), source }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(out_err(dir))?;
    }
    fs::write(path, bytes).map_err(out_err(path))
}

/// Rounds down to 1e-7 degrees so the written bbox stays inside the region.
fn floor7(v: f64) -> f64 {
    (v * 1e7).floor() / 1e7
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn terrain_height(p: Point2D) -> f64 {
    3.0 + 0.004 * p.x + 0.002 * p.y + 1.2 * (p.x / 97.0).sin() * (p.y / 131.0).cos()
}

fn lake_polygon(rng: &mut StdRng, c: Point2D, with_island: bool) -> PolygonWithHoles {
    let (rx, ry) = (rng.random_range(40.0..55.0), rng.random_range(28.0..40.0));
    let outer: Vec<Point2D> = (0..12)
        .map(|k| {
            let a = k as f64 * std::f64::consts::TAU / 12.0;
            let s = rng.random_range(0.85..1.0);
            Point2D::new(c.x + s * rx * a.cos(), c.y + s * ry * a.sin())
        })
        .collect();
    let holes = if with_island {
        let h = 6.0;
        vec![vec![
            Point2D::new(c.x - h, c.y - h),
            Point2D::new(c.x - h, c.y + h),
            Point2D::new(c.x + h, c.y + h),
            Point2D::new(c.x + h, c.y - h),
        ]]
    } else {
        vec![]
    };
    PolygonWithHoles::from_coords(outer, holes, WATER).expect("generated lake is valid")
}

fn box_mesh(id: String, fp: Rect, base: f64, height: f64) -> BuildingMesh {
    let (x0, y0, x1, y1) = (fp.min.x, fp.min.y, fp.max.x, fp.max.y);
    let top = base + height;
    let v =
        vec![[x0, y0, base], [x1, y0, base], [x1, y1, base], [x0, y1, base], [x0, y0, top], [x1, y0, top], [x1, y1, top], [x0, y1, top]];
    let t = vec![[0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5], [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7], [4, 5, 6], [4, 6, 7]];
    BuildingMesh::new(id, v, t)
}

fn layout(spec: &FixtureSpec, bounds: Rect, landcover_tiles: &[Rect], crown_tiles: &[Rect]) -> Layout {
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let s = spec.size_m;
    let roads = if spec.transit || spec.buildings > 0 {
        vec![
            Rect::new(0.0, 0.3 * s - ROAD_WIDTH / 2.0, bounds.max.x, 0.3 * s + ROAD_WIDTH / 2.0),
            Rect::new(0.6 * s - ROAD_WIDTH / 2.0, 0.0, 0.6 * s + ROAD_WIDTH / 2.0, bounds.max.y),
        ]
    } else {
        vec![]
    };
    let clear = |r: &Rect, taken: &[Rect], gap: f64| taken.iter().all(|t| !r.expand(gap).overlaps(t));

    // Lakes sit wholly inside one land-cover tile so each stays one feature.
    let mut lakes: Vec<PolygonWithHoles> = Vec::new();
    let mut taken: Vec<Rect> = roads.clone();
    while lakes.len() < spec.water_bodies {
        let c = Point2D::new(rng.random_range(80.0..s - 80.0), rng.random_range(80.0..s - 80.0));
        let lake = lake_polygon(&mut rng, c, lakes.is_empty());
        let b = lake.bounds();
        let inside_tile = landcover_tiles.iter().any(|t| t.expand(-10.0).contains_rect(&b, 0.0));
        if inside_tile && bounds.expand(-20.0).contains_rect(&b, 0.0) && clear(&b, &taken, 25.0) {
            taken.push(b);
            lakes.push(lake);
        }
    }

    let mut buildings = Vec::new();
    let mut used_colors = vec![GROUND_RGB, WATER_RGB, ROAD_RGB];
    while buildings.len() < spec.buildings {
        let (w, d) = (rng.random_range(10.0..24.0), rng.random_range(10.0..24.0));
        let x = rng.random_range(40.0..s - 40.0 - w);
        let y = rng.random_range(40.0..s - 40.0 - d);
        let fp = Rect::new(x, y, x + w, y + d);
        if !clear(&fp, &taken, 8.0) {
            continue;
        }
        let rgb = [rng.random_range(150..=250u8), rng.random_range(20..=120u8), rng.random_range(20..=200u8)];
        if used_colors.contains(&rgb) {
            continue;
        }
        used_colors.push(rgb);
        let base = [fp.min, fp.max, Point2D::new(fp.min.x, fp.max.y), Point2D::new(fp.max.x, fp.min.y)]
            .into_iter()
            .map(terrain_height)
            .fold(f64::INFINITY, f64::min);
        let k = buildings.len();
        let mut mesh = box_mesh(format!("NL.IMBAG.Pand.0344100000{:06}", 31_000 + k * 17), fp, base, rng.random_range(6.0..30.0));
        mesh.attributes.insert("construction_year".into(), rng.random_range(1890..2021).to_string());
        let usage = ["residential", "commercial", "industrial"][rng.random_range(0..3usize)];
        mesh.attributes.insert("usage".into(), usage.into());
        taken.push(fp);
        buildings.push((mesh, fp, rgb));
    }

    // Seams between crown tiles that lie well inside the region.
    let mut seams_x: Vec<f64> = crown_tiles.iter().map(|t| t.min.x).filter(|&x| x > 30.0 && x < s - 30.0).collect();
    let mut seams_y: Vec<f64> = crown_tiles.iter().map(|t| t.min.y).filter(|&y| y > 30.0 && y < s - 30.0).collect();
    seams_x.sort_by(f64::total_cmp);
    seams_x.dedup();
    seams_y.sort_by(f64::total_cmp);
    seams_y.dedup();

    let mut trees: Vec<Tree> = Vec::new();
    let mut attempts = 0;
    while trees.len() < spec.trees {
        attempts += 1;
        assert!(attempts < 1_000_000, "fixture region too crowded for {} trees", spec.trees);
        let radius = rng.random_range(2.4..5.0);
        let on_seam = trees.len() < spec.seam_trees && !(seams_x.is_empty() && seams_y.is_empty());
        let mut c = Point2D::new(rng.random_range(20.0..s - 20.0), rng.random_range(20.0..s - 20.0));
        if on_seam {
            let off = rng.random_range(-0.4..0.4) * radius;
            if trees.len() % 2 == 0 && !seams_x.is_empty() {
                c.x = seams_x[rng.random_range(0..seams_x.len())] + off;
            } else if !seams_y.is_empty() {
                c.y = seams_y[rng.random_range(0..seams_y.len())] + off;
            } else {
                c.x = seams_x[rng.random_range(0..seams_x.len())] + off;
            }
        }
        let disc = Rect::new(c.x - radius, c.y - radius, c.x + radius, c.y + radius);
        if !bounds.expand(-15.0).contains_rect(&disc, 0.0) || !clear(&disc, &taken, 8.0) {
            continue;
        }
        if trees.iter().any(|t| t.center.distance(c) < t.radius + radius + 4.0) {
            continue;
        }
        let value = CROWN_VALUES[rng.random_range(0..3usize)];
        trees.push(Tree { center: c, radius, value });
    }

    let mut gaps = Vec::new();
    while gaps.len() < spec.elevation_gaps {
        let cs = spec.cell_size;
        let x = (rng.random_range(50.0..s - 100.0) / cs).floor() * cs;
        let y = (rng.random_range(50.0..s - 100.0) / cs).floor() * cs;
        let r = Rect::new(x, y, x + 3.0 * cs, y + 3.0 * cs);
        if lakes.iter().all(|l| !l.bounds().expand(10.0).overlaps(&r)) && gaps.iter().all(|g: &Rect| !g.expand(20.0).overlaps(&r)) {
            gaps.push(r);
        }
    }
    Layout { bounds, roads, lakes, buildings, trees, gaps }
}

/// Writes a fixture set into `dir` and returns where everything went.
pub fn write_fixtures(dir: &Path, spec: &FixtureSpec) -> Result<FixtureSet, PipelineError> {
    let frame = LocalFrame::new(spec.origin);
    let ne = frame.to_geo(Point2D::new(spec.size_m, spec.size_m));
    let bbox = GeoBBox::new(spec.origin.lon, spec.origin.lat, floor7(ne.lon), floor7(ne.lat))?;
    let frame = bbox.frame();
    let bounds = bbox.scene_bounds()?;
    let table = ClassTable::default();
    let err = |e: crate::geom::GeomError| PipelineError::Config(e.to_string());

    let lc_tiles =
        tiles_covering(&bounds, spec.zoom, SourceKind::Landcover.name(), &frame).map_err(|e| PipelineError::Config(e.to_string()))?;
    let lc_rects: Vec<Rect> =
        lc_tiles.iter().map(|a| a.scene_bounds(&frame)).collect::<Result<_, _>>().map_err(|e| PipelineError::Config(e.to_string()))?;
    let tree_tiles =
        tiles_covering(&bounds, spec.zoom, SourceKind::Trees.name(), &frame).map_err(|e| PipelineError::Config(e.to_string()))?;
    let tree_rects: Vec<Rect> =
        tree_tiles.iter().map(|a| a.scene_bounds(&frame)).collect::<Result<_, _>>().map_err(|e| PipelineError::Config(e.to_string()))?;
    let lay = layout(spec, bounds, &lc_rects, &tree_rects);

    write_landcover(dir, &lay, &lc_tiles, &lc_rects, &frame, &table).map_err(err)?;
    let nodata_cells = write_elevation(dir, spec, &lay)?;
    write_buildings(dir, &lay, &frame)?;
    write_aerial(dir, spec, &lay)?;
    write_trees(dir, spec, &lay, &tree_tiles, &tree_rects)?;
    let mut tracks = 0;
    if spec.transit {
        tracks = write_transit(dir, spec, &frame)?;
    }

    let mut counts = BTreeMap::new();
    counts.insert("terrain".to_string(), 1);
    counts.insert("water".to_string(), lay.lakes.len());
    counts.insert("building".to_string(), lay.buildings.len());
    counts.insert("tree".to_string(), lay.trees.len());
    counts.insert("vehicle-track".to_string(), tracks);
    let truth = GroundTruth {
        bbox: bbox.to_string(),
        seed: spec.seed,
        counts,
        roof_colors: lay.buildings.iter().map(|(m, _, rgb)| (m.id.clone(), *rgb)).collect(),
        seam_trees: spec.seam_trees.min(lay.trees.len()),
        nodata_cells,
        water_holes: lay.lakes.iter().map(|l| l.holes().len()).sum(),
        trees: lay.trees.iter().map(|t| [round3(t.center.x), round3(t.center.y), round3(t.radius)]).collect(),
    };
    let mut text = serde_json::to_string_pretty(&truth).expect("ground truth serializes");
    text.push('\n');
    write(&dir.join("ground_truth.json"), text)?;

    let mut cfg = PipelineConfig { bbox: Some(bbox), seed: spec.seed, ..Default::default() };
    cfg.sources = SourceConfig { fixture_dir: Some(PathBuf::from(".")), zoom: spec.zoom, ..Default::default() };
    cfg.sources.elevation.tile_size = spec.grid_tile;
    cfg.sources.aerial.tile_size = spec.grid_tile;
    if spec.transit {
        cfg.transit_network = Some(PathBuf::from("transit/network.txt"));
    }
    let config = dir.join("geoscene.toml");
    write(&config, format!("# Offline fixture region\n{}", cfg.to_toml()))?;
    Ok(FixtureSet { dir: dir.to_path_buf(), config, ground_truth: truth, bbox })
}

fn write_landcover(
    dir: &Path,
    lay: &Layout,
    tiles: &[TileAddress],
    rects: &[Rect],
    frame: &LocalFrame,
    table: &ClassTable,
) -> Result<(), crate::geom::GeomError> {
    use crate::geom::clip_polygon_to_rect;
    for (addr, rect) in tiles.iter().zip(rects) {
        let mut polys: Vec<(PolygonWithHoles, BTreeMap<String, String>)> = Vec::new();
        let attrs = BTreeMap::new();
        polys.push((PolygonWithHoles::rect(*rect, GRASS)?, attrs.clone()));
        for road in &lay.roads {
            for piece in clip_polygon_to_rect(&PolygonWithHoles::rect(*road, ROAD)?, rect) {
                polys.push((piece, attrs.clone()));
            }
        }
        for lake in &lay.lakes {
            if rect.contains_rect(&lake.bounds(), 0.0) {
                polys.push((lake.clone(), attrs.clone()));
            }
        }
        let path = dir.join(SourceKind::Landcover.name()).join(addr.path("geojson"));
        write(&path, write_geojson(&polys, frame, table)).map_err(|e| crate::geom::GeomError::InvalidCoordinate(e.to_string()))?;
    }
    Ok(())
}

fn write_elevation(dir: &Path, spec: &FixtureSpec, lay: &Layout) -> Result<usize, PipelineError> {
    let cs = spec.cell_size;
    let n = (spec.grid_tile / cs).round() as usize;
    let mut nodata_cells = 0;
    let mut y = 0.0;
    while y < lay.bounds.max.y {
        let mut x = 0.0;
        while x < lay.bounds.max.x {
            let mut values = Vec::with_capacity(n * n);
            for r in 0..n {
                for c in 0..n {
                    let p = Point2D::new(x + (c as f64 + 0.5) * cs, y + (r as f64 + 0.5) * cs);
                    if lay.gaps.iter().any(|g| g.contains(p)) {
                        nodata_cells += 1;
                        values.push(NODATA);
                        continue;
                    }
                    let mut z = terrain_height(p);
                    if lay.lakes.iter().any(|l| point_in_polygon(p, l)) {
                        z -= 2.5;
                    }
                    values.push((z * 100.0).round() / 100.0);
                }
            }
            let hf = HeightField::new(n, n, Point2D::new(x, y), cs, values, NODATA).map_err(|e| PipelineError::Config(e.to_string()))?;
            write(&dir.join(SourceKind::Elevation.name()).join(format!("{x}_{y}.asc")), hf.to_ascii_grid())?;
            x += spec.grid_tile;
        }
        y += spec.grid_tile;
    }
    Ok(nodata_cells)
}

fn write_buildings(dir: &Path, lay: &Layout, frame: &LocalFrame) -> Result<(), PipelineError> {
    let b = lay.bounds;
    let c = b.center();
    let quads = [
        ("sw", Rect::new(b.min.x, b.min.y, c.x, c.y)),
        ("se", Rect::new(c.x, b.min.y, b.max.x, c.y)),
        ("nw", Rect::new(b.min.x, c.y, c.x, b.max.y)),
        ("ne", Rect::new(c.x, c.y, b.max.x, b.max.y)),
    ];
    let region = |r: &Rect, hmax: f64| {
        let sw = frame.to_geo(r.min);
        let ne = frame.to_geo(r.max);
        json!([sw.lon.to_radians(), sw.lat.to_radians(), ne.lon.to_radians(), ne.lat.to_radians(), -10.0, hmax])
    };
    let mut children = Vec::new();
    for (name, q) in quads {
        let members: Vec<BuildingMesh> = lay
            .buildings
            .iter()
            .filter(|(_, fp, _)| q.contains(fp.center()) || (q.max.x == b.max.x && q.max.y == b.max.y && fp.center() == b.max))
            .map(|(m, _, _)| m.clone())
            .collect();
        let mut child = json!({"boundingVolume": {"region": region(&q, 100.0)}, "geometricError": 0.0});
        if !members.is_empty() {
            let qc = q.center();
            let payload = encode_b3dm(&members, [qc.x, qc.y, 0.0]);
            let uri = format!("{name}.b3dm");
            write(&dir.join(SourceKind::Buildings.name()).join(&uri), write_b3dm(&payload))?;
            child["content"] = json!({"uri": uri});
        }
        children.push(child);
    }
    let doc = json!({
        "asset": {"version": "1.0"},
        "geometricError": 100.0,
        "root": {"boundingVolume": {"region": region(&b, 100.0)}, "geometricError": 50.0, "refine": "ADD", "children": children},
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("tileset serializes");
    text.push('\n');
    write(&dir.join(SourceKind::Buildings.name()).join("tileset.json"), text)
}

fn write_aerial(dir: &Path, spec: &FixtureSpec, lay: &Layout) -> Result<(), PipelineError> {
    let px = spec.aerial_pixel;
    let n = (spec.grid_tile / px).round() as usize;
    let mut y = 0.0;
    while y < lay.bounds.max.y {
        let mut x = 0.0;
        while x < lay.bounds.max.x {
            let tile = Rect::new(x, y, x + spec.grid_tile, y + spec.grid_tile);
            let mut img = ColorRaster::filled(n, n, tile, GROUND_RGB);
            for r in 0..n {
                for c in 0..n {
                    let p = img.pixel_center(c, r);
                    let rgb = if let Some((_, _, rgb)) = lay.buildings.iter().find(|(_, fp, _)| fp.contains(p)) {
                        *rgb
                    } else if lay.lakes.iter().any(|l| point_in_polygon(p, l)) {
                        WATER_RGB
                    } else if lay.roads.iter().any(|rd| rd.contains(p)) {
                        ROAD_RGB
                    } else {
                        GROUND_RGB
                    };
                    img.set(c, r, rgb);
                }
            }
            write(&dir.join(SourceKind::Aerial.name()).join(format!("{x}_{y}.ppm")), img.to_ppm())?;
            x += spec.grid_tile;
        }
        y += spec.grid_tile;
    }
    Ok(())
}

fn write_trees(dir: &Path, spec: &FixtureSpec, lay: &Layout, tiles: &[TileAddress], rects: &[Rect]) -> Result<(), PipelineError> {
    let n = spec.crown_pixels;
    for (addr, rect) in tiles.iter().zip(rects) {
        let mut raster = CrownRaster::new(addr.clone(), n, n, *rect, vec![0; n * n]).map_err(|e| PipelineError::Config(e.to_string()))?;
        for r in 0..n {
            for c in 0..n {
                let p = raster.pixel_center(c, r);
                if let Some(t) = lay.trees.iter().find(|t| t.center.distance(p) <= t.radius) {
                    raster.pixels[r * n + c] = t.value;
                }
            }
        }
        write(&dir.join(SourceKind::Trees.name()).join(addr.path("pgm")), raster.to_pgm())?;
    }
    Ok(())
}

/// Two routes along the roads plus a recorded feed of four vehicles.
fn write_transit(dir: &Path, spec: &FixtureSpec, frame: &LocalFrame) -> Result<usize, PipelineError> {
    let s = spec.size_m;
    let (ry, rx) = (0.3 * s, 0.6 * s);
    let p = Point2D::new;
    let cfg_err = |e: crate::transit::TransitError| PipelineError::Config(e.to_string());
    let routes = [
        Route::new("1", "Station Noord", vec![p(20.0, ry), p(rx, ry), p(rx, s - 20.0)], vec![Stop { name: "Westplein".into(), arc: 0.0 }])
            .map_err(cfg_err)?,
        Route::new("2", "Zuidpark", vec![p(rx, s - 20.0), p(rx, ry), p(s - 20.0, ry)], vec![Stop { name: "Noordhoek".into(), arc: 0.0 }])
            .map_err(cfg_err)?,
    ];
    let mut doc = format!("# demo network\norigin {} {}\nagency Demo Transit\n", frame.origin.lat, frame.origin.lon);
    for r in &routes {
        doc.push_str(&format!("route {} {}\n", r.id, r.destination));
        for q in &r.points {
            doc.push_str(&format!("xy {} {}\n", q.x, q.y));
        }
        for st in &r.stops {
            doc.push_str(&format!("stop {} {}\n", st.arc, st.name));
        }
        let end = r.length();
        doc.push_str(&format!("stop {end} {}\nend\n", r.destination));
    }
    write(&dir.join("transit").join("network.txt"), doc)?;

    let mut rng = StdRng::seed_from_u64(spec.seed ^ 0x7a11);
    let mut fixes = Vec::new();
    for (k, r) in routes.iter().enumerate().flat_map(|(i, r)| [(2 * i, r), (2 * i + 1, r)]) {
        let speed = rng.random_range(6.0..11.0);
        let start_arc = if k % 2 == 0 { 0.0 } else { 250.0 };
        let phase = rng.random_range(0.0..30.0f64).round();
        let mut t = phase;
        while t <= 330.0 {
            let arc = (start_arc + speed * t).min(r.length());
            let (q, heading) = r.point_at(arc);
            let jitter = rng.random_range(-2.0..2.0);
            let h = heading.to_radians();
            let off = p(q.x + jitter * h.cos(), q.y - jitter * h.sin());
            fixes.push(VehicleFix { vehicle: format!("bus-{}", k + 1), route: r.id.clone(), position: frame.to_geo(off), timestamp: t });
            t += rng.random_range(25.0..45.0f64).round();
        }
    }
    fixes.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then_with(|| a.vehicle.cmp(&b.vehicle)));
    write(&dir.join("transit").join("replay.txt"), format!("# t vehicle route lat lon\n{}", write_replay(&fixes)))?;
    Ok(routes.len())
}
