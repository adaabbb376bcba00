//! End-to-end generation: land cover, elevation, water, buildings and trees
//! are produced in order, assembled into one scene and exported.

pub mod fixtures;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buildings::{
    assign_roof_color, compute_uv, parse_b3dm, split_by_batch, BuildingMesh, ColorRaster, SplitOptions, TextureLibrary,
};
use crate::geom::{GeoPoint, LocalFrame, Point2D, Rect, SceneProjection};
use crate::hydro::{build_water_mesh, extract_water_polygons, snap_shore, ShoreParams, WaterBody};
use crate::ingest::{FeatureCollection, Ingestor, SourceConfig, SourceKind};
use crate::landcover::{rasterize_classes, ClassTable, LandCoverRaster};
use crate::scene::{assemble, export_glb, Manifest, SceneFrame, SceneGraph, SceneLayers, TrackLine};
use crate::terrain::{build_lod_mesh, fill_gaps_with, FillParams, FillReport, HeightField, LodParams, TerrainMesh};
use crate::transit::load_network;
use crate::vegetation::{detect_crowns, merge_cross_tile, place_trees, CrownParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Request,
    Landcover,
    Elevation,
    Water,
    Buildings,
    Trees,
    Assemble,
    Export,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Request => "request",
            Stage::Landcover => "landcover",
            Stage::Elevation => "elevation",
            Stage::Water => "water",
            Stage::Buildings => "buildings",
            Stage::Trees => "trees",
            Stage::Assemble => "assemble",
            Stage::Export => "export",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("invalid request: {0}")]
    Request(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("writing {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

fn at<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage { stage, message: e.to_string() }
}

/// Geographic bounding box, written `west,south,east,north` in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBBox {
    pub west: f64,
    pub south: f64,
    pub east: f64,
    pub north: f64,
}

impl GeoBBox {
    pub fn new(west: f64, south: f64, east: f64, north: f64) -> Result<GeoBBox, PipelineError> {
        for (lat, lon) in [(south, west), (north, east)] {
            GeoPoint::new(lat, lon).map_err(|e| PipelineError::Request(e.to_string()))?;
        }
        if !(east > west && north > south) {
            return Err(PipelineError::Request("bounding box needs positive area".into()));
        }
        Ok(GeoBBox { west, south, east, north })
    }

    /// South-west corner; the scene frame origin.
    pub fn origin(&self) -> GeoPoint {
        GeoPoint { lat: self.south, lon: self.west }
    }

    pub fn frame(&self) -> LocalFrame {
        LocalFrame::new(self.origin())
    }

    /// Scene rectangle `[0, w] × [0, h]`.
    pub fn scene_bounds(&self) -> Result<Rect, PipelineError> {
        let ne = self.frame().to_scene(GeoPoint { lat: self.north, lon: self.east }).map_err(|e| PipelineError::Request(e.to_string()))?;
        Ok(Rect::new(0.0, 0.0, ne.x, ne.y))
    }
}

impl FromStr for GeoBBox {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| PipelineError::Request(format!("bbox {s:?}: {e}")))?;
        let [w, so, e, n] = v[..] else {
            return Err(PipelineError::Request(format!("bbox {s:?} needs west,south,east,north")));
        };
        GeoBBox::new(w, so, e, n)
    }
}

impl fmt::Display for GeoBBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.west, self.south, self.east, self.north)
    }
}

/// Generation settings; every field is echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Region used when the caller gives none.
    pub bbox: Option<GeoBBox>,
    pub seed: u64,
    /// Land-cover raster resolution (cells per side).
    pub n: usize,
    /// Largest accepted bbox edge in meters.
    pub max_extent_m: f64,
    /// LOD viewpoint; the bbox center 2 m above ground when unset.
    pub viewpoint: Option<[f64; 3]>,
    pub lod: LodParams,
    pub fill: FillParams,
    pub shore: ShoreParams,
    /// Terrain within this distance of a water outline is lowered under it.
    pub shore_reach: f64,
    pub crowns: CrownParams,
    /// Facade texels per meter.
    pub texel_density: f64,
    /// Class table text (`code name texture [category]` per line).
    pub classes: Option<String>,
    /// Route network whose polylines become vehicle-track objects.
    pub transit_network: Option<PathBuf>,
    pub sources: SourceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            bbox: None,
            seed: 0,
            n: 256,
            max_extent_m: 5000.0,
            viewpoint: None,
            lod: LodParams::default(),
            fill: FillParams::default(),
            shore: ShoreParams::default(),
            shore_reach: 5.0,
            crowns: CrownParams::default(),
            texel_density: 1.0,
            classes: None,
            transit_network: None,
            sources: SourceConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths in it resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.transit_network);
        resolve(base, &mut cfg.sources.fixture_dir);
        resolve(base, &mut cfg.sources.cache_dir);
        for kind in SourceKind::ALL {
            resolve(base, &mut cfg.sources.spec_mut(kind).fixture_dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn class_table(&self) -> Result<ClassTable, PipelineError> {
        match &self.classes {
            Some(text) => text.parse().map_err(|e| PipelineError::Config(format!("class table: {e}"))),
            None => Ok(ClassTable::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub bbox: GeoBBox,
    pub config: PipelineConfig,
}

impl GenerationRequest {
    pub fn new(bbox: GeoBBox, config: PipelineConfig) -> Self {
        GenerationRequest { bbox, config }
    }

    /// Scene bounds after checking area, extent and raster size.
    pub fn validate(&self) -> Result<Rect, PipelineError> {
        let b = self.bbox.scene_bounds()?;
        let max = self.config.max_extent_m;
        if b.width() > max || b.height() > max {
            return Err(PipelineError::Request(format!("bbox is {:.0} m × {:.0} m; the limit is {max} m per side", b.width(), b.height())));
        }
        if self.config.n == 0 {
            return Err(PipelineError::Request("raster size n must be positive".into()));
        }
        Ok(b)
    }
}

/// Maps metric source data (anchored at the grid origin) into the scene
/// frame. Between two equirectangular frames the map is an axis-aligned
/// scale and shift.
#[derive(Debug, Clone, Copy)]
pub struct SourceFrame {
    scene: LocalFrame,
    grid: LocalFrame,
}

impl SourceFrame {
    pub fn new(scene: LocalFrame, grid_origin: Option<GeoPoint>) -> Self {
        SourceFrame { scene, grid: grid_origin.map_or(scene, LocalFrame::new) }
    }

    pub fn is_identity(&self) -> bool {
        self.scene.origin == self.grid.origin
    }

    pub fn to_grid(&self, p: Point2D) -> Point2D {
        if self.is_identity() {
            return p;
        }
        self.grid.to_scene(self.scene.to_geo(p)).unwrap_or(Point2D::new(f64::NAN, f64::NAN))
    }

    pub fn to_scene(&self, p: Point2D) -> Point2D {
        if self.is_identity() {
            return p;
        }
        self.scene.to_scene(self.grid.to_geo(p)).unwrap_or(Point2D::new(f64::NAN, f64::NAN))
    }

    pub fn grid_region(&self, scene: &Rect) -> Rect {
        Rect::from_points([self.to_grid(scene.min), self.to_grid(scene.max)]).expect("two points")
    }

    /// Height grid over `bounds` in scene coordinates. Identity frames keep
    /// the source lattice; otherwise cells are resampled bilinearly.
    pub fn heightfield(&self, src: HeightField, bounds: &Rect) -> HeightField {
        if self.is_identity() {
            return src;
        }
        let cs = src.cell_size;
        let ncols = (bounds.width() / cs).ceil().max(1.0) as usize;
        let nrows = (bounds.height() / cs).ceil().max(1.0) as usize;
        let nodata = src.nodata;
        let mut values = Vec::with_capacity(ncols * nrows);
        for r in 0..nrows {
            for c in 0..ncols {
                let p = Point2D::new(bounds.min.x + (c as f64 + 0.5) * cs, bounds.min.y + (r as f64 + 0.5) * cs);
                values.push(src.sample(self.to_grid(p)).unwrap_or(nodata));
            }
        }
        HeightField::new(ncols, nrows, bounds.min, cs, values, nodata).expect("resampled grid is consistent")
    }

    /// Aerial image over `bounds` with nearest-pixel resampling.
    pub fn aerial(&self, src: ColorRaster, bounds: &Rect) -> ColorRaster {
        if self.is_identity() {
            return src;
        }
        let (pw, ph) = src.pixel_size();
        let w = (bounds.width() / pw).ceil().max(1.0) as usize;
        let h = (bounds.height() / ph).ceil().max(1.0) as usize;
        let out_bounds = Rect::new(bounds.min.x, bounds.max.y - h as f64 * ph, bounds.min.x + w as f64 * pw, bounds.max.y);
        let mut out = ColorRaster::filled(w, h, out_bounds, [0, 0, 0]);
        for r in 0..h {
            for c in 0..w {
                let q = self.to_grid(out.pixel_center(c, r));
                let sc = ((q.x - src.bounds.min.x) / pw).floor();
                let sr = ((src.bounds.max.y - q.y) / ph).floor();
                if sc >= 0.0 && sr >= 0.0 && (sc as usize) < src.width && (sr as usize) < src.height {
                    out.set(c, r, src.get(sc as usize, sr as usize));
                }
            }
        }
        out
    }

    pub fn mesh(&self, mut m: BuildingMesh) -> BuildingMesh {
        if !self.is_identity() {
            for v in &mut m.vertices {
                let p = self.to_scene(Point2D::new(v[0], v[1]));
                v[0] = p.x;
                v[1] = p.y;
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct GenerationOutput {
    pub scene: SceneGraph,
    pub glb: Vec<u8>,
    pub manifest: Manifest,
    pub fill: FillReport,
    pub timings: Vec<(Stage, Duration)>,
}

impl GenerationOutput {
    /// Writes `<out>` and `<out stem>.manifest.json` next to it.
    pub fn write(&self, out: &Path) -> Result<(PathBuf, PathBuf), PipelineError> {
        let manifest_path = manifest_path(out);
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| PipelineError::Output { path: dir.to_path_buf(), source })?;
        }
        std::fs::write(out, &self.glb).map_err(|source| PipelineError::Output { path: out.to_path_buf(), source })?;
        std::fs::write(&manifest_path, self.manifest.to_text())
            .map_err(|source| PipelineError::Output { path: manifest_path.clone(), source })?;
        Ok((out.to_path_buf(), manifest_path))
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

struct Timer {
    timings: Vec<(Stage, Duration)>,
    started: Instant,
}

impl Timer {
    fn new() -> Self {
        Timer { timings: Vec::new(), started: Instant::now() }
    }

    fn lap(&mut self, stage: Stage) {
        let d = self.started.elapsed();
        log::info!("stage {stage} finished in {:.3} s", d.as_secs_f64());
        self.timings.push((stage, d));
        self.started = Instant::now();
    }
}

fn count(drops: &mut BTreeMap<String, usize>, key: &str, n: usize) {
    if n > 0 {
        *drops.entry(key.to_string()).or_default() += n;
    }
}

struct Terrain {
    fc: FeatureCollection,
    raster: LandCoverRaster,
    hf: HeightField,
    fill: FillReport,
    mesh: TerrainMesh,
}

fn landcover_and_elevation(req: &GenerationRequest, ing: &Ingestor, bounds: Rect, timer: &mut Timer) -> Result<Terrain, PipelineError> {
    let cfg = &req.config;
    let frame = req.bbox.frame();
    let sf = SourceFrame::new(frame, cfg.sources.grid_origin);

    let table = cfg.class_table()?;
    let fc = ing.fetch_landcover(&bounds, &frame, &table).map_err(at(Stage::Landcover))?;
    let raster = rasterize_classes(&fc, cfg.n, bounds, &table).map_err(at(Stage::Landcover))?;
    timer.lap(Stage::Landcover);

    let src = ing.load_heightgrid(&sf.grid_region(&bounds)).map_err(at(Stage::Elevation))?;
    let (hf, fill) = fill_gaps_with(&sf.heightfield(src, &bounds), &cfg.fill).map_err(at(Stage::Elevation))?;
    if fill.unfilled > 0 {
        log::warn!("{} elevation cells stayed empty after gap filling", fill.unfilled);
    }
    let mut lod = cfg.lod;
    let c = bounds.center();
    lod.viewpoint = cfg.viewpoint.unwrap_or([c.x, c.y, hf.sample_lenient(c, 0.0) + 2.0]);
    let mesh = build_lod_mesh(&hf, &raster, &lod);
    timer.lap(Stage::Elevation);
    Ok(Terrain { fc, raster, hf, fill, mesh })
}

/// Runs every stage and returns the exported scene without writing it.
pub fn generate(req: &GenerationRequest, ing: &Ingestor) -> Result<GenerationOutput, PipelineError> {
    let bounds = req.validate()?;
    let cfg = &req.config;
    let seed = cfg.seed;
    let frame = req.bbox.frame();
    let sf = SourceFrame::new(frame, cfg.sources.grid_origin);
    let mut timer = Timer::new();
    let mut drops: BTreeMap<String, usize> = BTreeMap::new();

    let Terrain { fc, raster, hf, fill, mesh: mut terrain } = landcover_and_elevation(req, ing, bounds, &mut timer)?;

    let mut bodies = Vec::new();
    let mut water = Vec::new();
    for (id, poly) in extract_water_polygons(&fc).into_iter().enumerate() {
        if !poly.bounds().overlaps(&bounds) {
            count(&mut drops, "water_outside", 1);
            continue;
        }
        match WaterBody::estimate(poly, &hf, &cfg.shore) {
            Ok(body) => {
                water.push(build_water_mesh(&body, id, &bounds).map_err(at(Stage::Water))?);
                bodies.push(body);
            }
            Err(e) => {
                log::warn!("water body {id} skipped: {e}");
                count(&mut drops, "water_no_shore", 1);
            }
        }
    }
    let raised = snap_shore(&mut terrain, &bodies, cfg.shore_reach);
    log::debug!("{raised} terrain vertices lowered under water surfaces");
    timer.lap(Stage::Water);

    let buildings = load_buildings(req, ing, &sf, &bounds, &mut drops)?;
    timer.lap(Stage::Buildings);

    let rasters = ing.load_tree_rasters(&bounds, &frame).map_err(at(Stage::Trees))?;
    let per_tile = rasters.iter().map(|(a, r)| (a.clone(), detect_crowns(r, &cfg.crowns))).collect();
    let merged = merge_cross_tile(&per_tile, &rasters, &cfg.crowns).map_err(at(Stage::Trees))?;
    let placement = place_trees(&merged, &hf, &raster, seed);
    count(&mut drops, "tree_on_water", placement.dropped_on_water);
    count(&mut drops, "tree_outside", placement.dropped_outside);
    timer.lap(Stage::Trees);

    let mut layers = SceneLayers::new(frame.origin);
    layers.tracks = match &cfg.transit_network {
        Some(path) => route_tracks(path, &frame, &hf)?,
        None => Vec::new(),
    };
    layers.terrain = Some(terrain);
    layers.water = water;
    layers.buildings = buildings;
    layers.trees = placement.trees;
    layers.drops = drops;
    let scene = assemble(SceneFrame { origin: frame.origin, bounds, seed }, &[layers]).map_err(at(Stage::Assemble))?;
    scene.validate(1e-6).map_err(at(Stage::Assemble))?;
    timer.lap(Stage::Assemble);

    let glb = export_glb(&scene).map_err(at(Stage::Export))?;
    let mut manifest = Manifest::from_scene(&scene);
    manifest.parameters = serde_json::json!({
        "bbox": req.bbox.to_string(),
        "config": req.config,
        "fill": fill,
    });
    timer.lap(Stage::Export);
    Ok(GenerationOutput { scene, glb, manifest, fill, timings: timer.timings })
}

fn load_buildings(
    req: &GenerationRequest,
    ing: &Ingestor,
    sf: &SourceFrame,
    bounds: &Rect,
    drops: &mut BTreeMap<String, usize>,
) -> Result<Vec<BuildingMesh>, PipelineError> {
    let cfg = &req.config;
    if !cfg.sources.buildings.enabled {
        return Ok(Vec::new());
    }
    let err = |m: String| PipelineError::Stage { stage: Stage::Buildings, message: m };
    let tileset = ing.fetch_building_tileset(&req.bbox.frame()).map_err(|e| err(e.to_string()))?;
    let aerial = if cfg.sources.aerial.enabled {
        Some(sf.aerial(ing.load_aerial_image(&sf.grid_region(bounds)).map_err(|e| err(e.to_string()))?, bounds))
    } else {
        None
    };
    let library = TextureLibrary::default();
    let mut out = Vec::new();
    for uri in tileset.contents_in(bounds) {
        let payload = parse_b3dm(&ing.fetch_b3dm(&uri).map_err(|e| err(e.to_string()))?).map_err(|e| err(format!("{uri}: {e}")))?;
        for mesh in split_by_batch(&payload, &SplitOptions::default()).map_err(|e| err(format!("{uri}: {e}")))? {
            let mesh = sf.mesh(mesh);
            match mesh.footprint() {
                None => {
                    count(drops, "building_empty_geometry", 1);
                    continue;
                }
                Some(fp) if !bounds.contains(fp.center()) => {
                    count(drops, "building_outside", 1);
                    continue;
                }
                Some(_) => {}
            }
            let mut m = match compute_uv(&mesh, cfg.texel_density) {
                Ok(m) => m,
                Err(e) => {
                    log::warn!("building {} skipped: {e}", mesh.id);
                    count(drops, "building_invalid", 1);
                    continue;
                }
            };
            if let Some(a) = &aerial {
                m = assign_roof_color(&m, a);
            }
            m.texture_key = library.pick(&m.attributes, &m.id, cfg.seed).map(str::to_string);
            out.push(m);
        }
    }
    Ok(out)
}

fn route_tracks(path: &Path, frame: &LocalFrame, hf: &HeightField) -> Result<Vec<TrackLine>, PipelineError> {
    let err = |m: String| PipelineError::Stage { stage: Stage::Assemble, message: m };
    let text = std::fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
    let net = load_network(&text, Some(*frame)).map_err(|e| err(e.to_string()))?;
    net.routes
        .values()
        .map(|r| {
            let points = r
                .points
                .iter()
                .map(|&p| {
                    let q = if net.frame == *frame { p } else { frame.to_scene(net.frame.to_geo(p)).map_err(|e| err(e.to_string()))? };
                    Ok([q.x, q.y, hf.sample_lenient(q, 0.0) + 0.5])
                })
                .collect::<Result<_, PipelineError>>()?;
            Ok(TrackLine { id: r.id.clone(), points })
        })
        .collect()
}

/// What a cache prefill touched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FetchReport {
    pub landcover_features: usize,
    pub elevation_cells: usize,
    pub building_contents: usize,
    pub tree_tiles: usize,
    pub aerial_pixels: usize,
}

/// Loads every source needed for `req` so later runs hit the cache only.
pub fn fetch(req: &GenerationRequest, ing: &Ingestor) -> Result<FetchReport, PipelineError> {
    let bounds = req.validate()?;
    if ing.config().cache_dir.is_none() {
        return Err(PipelineError::Config("fetch needs a cache directory".into()));
    }
    let cfg = &req.config;
    let frame = req.bbox.frame();
    let sf = SourceFrame::new(frame, cfg.sources.grid_origin);
    let mut report = FetchReport::default();
    let enabled = |k: SourceKind| cfg.sources.spec(k).enabled;
    if enabled(SourceKind::Landcover) {
        let fc = ing.fetch_landcover(&bounds, &frame, &cfg.class_table()?).map_err(at(Stage::Landcover))?;
        report.landcover_features = fc.len();
    }
    if enabled(SourceKind::Elevation) {
        let hf = ing.load_heightgrid(&sf.grid_region(&bounds)).map_err(at(Stage::Elevation))?;
        report.elevation_cells = hf.ncols * hf.nrows;
    }
    if enabled(SourceKind::Buildings) {
        let tileset = ing.fetch_building_tileset(&frame).map_err(at(Stage::Buildings))?;
        for uri in tileset.contents_in(&bounds) {
            ing.fetch_b3dm(&uri).map_err(at(Stage::Buildings))?;
            report.building_contents += 1;
        }
    }
    if enabled(SourceKind::Aerial) {
        let img = ing.load_aerial_image(&sf.grid_region(&bounds)).map_err(at(Stage::Buildings))?;
        report.aerial_pixels = img.width * img.height;
    }
    if enabled(SourceKind::Trees) {
        report.tree_tiles = ing.load_tree_rasters(&bounds, &frame).map_err(at(Stage::Trees))?.len();
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageCheck {
    pub stage: Stage,
    pub error: Option<String>,
}

/// Validates each source-backed stage on its own: a broken source fails its
/// stage's check and no other.
pub fn dry_run(req: &GenerationRequest, ing: &Ingestor) -> Result<Vec<StageCheck>, PipelineError> {
    let bounds = req.validate()?;
    let cfg = &req.config;
    let frame = req.bbox.frame();
    let sf = SourceFrame::new(frame, cfg.sources.grid_origin);
    let table = cfg.class_table()?;
    let check = |stage: Stage, r: Result<(), String>| StageCheck { stage, error: r.err() };
    let landcover = || -> Result<(), String> {
        let fc = ing.fetch_landcover(&bounds, &frame, &table).map_err(|e| e.to_string())?;
        rasterize_classes(&fc, cfg.n, bounds, &table).map(|_| ()).map_err(|e| e.to_string())
    };
    let elevation = || -> Result<(), String> {
        let hf = ing.load_heightgrid(&sf.grid_region(&bounds)).map_err(|e| e.to_string())?;
        fill_gaps_with(&hf, &cfg.fill).map(|_| ()).map_err(|e| e.to_string())
    };
    let buildings = || -> Result<(), String> {
        let mut drops = BTreeMap::new();
        load_buildings(req, ing, &sf, &bounds, &mut drops).map(|_| ()).map_err(|e| e.to_string())
    };
    let trees = || -> Result<(), String> {
        let rasters = ing.load_tree_rasters(&bounds, &frame).map_err(|e| e.to_string())?;
        let per_tile = rasters.iter().map(|(a, r)| (a.clone(), detect_crowns(r, &cfg.crowns))).collect();
        merge_cross_tile(&per_tile, &rasters, &cfg.crowns).map(|_| ()).map_err(|e| e.to_string())
    };
    Ok(vec![
        check(Stage::Landcover, landcover()),
        check(Stage::Elevation, elevation()),
        check(Stage::Buildings, buildings()),
        check(Stage::Trees, trees()),
    ])
}
