//! Tree crown detection, cross-tile merging and placement.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point2D, Rect};
use crate::ingest::TileAddress;
use crate::landcover::{class_at, LandCoverRaster, WATER};
use crate::terrain::HeightField;
use crate::util::seeded_index;

pub const DEFAULT_MIN_PIXELS: usize = 3;
/// Model variants available per size class.
pub const MODEL_VARIANTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VegetationError {
    #[error("inconsistent tiling between {a} and {b}: {reason}")]
    InconsistentTiling { a: String, b: String, reason: String },
    #[error("invalid crown raster: {0}")]
    InvalidRaster(String),
    #[error("csv export failed: {0}")]
    Export(String),
}

/// 8-bit crown tile; 0 is background, other values encode tree size.
/// Row 0 is the northern row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrownRaster {
    pub addr: TileAddress,
    pub width: usize,
    pub height: usize,
    pub bounds: Rect,
    pub pixels: Vec<u8>,
}

impl CrownRaster {
    pub fn new(addr: TileAddress, width: usize, height: usize, bounds: Rect, pixels: Vec<u8>) -> Result<Self, VegetationError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(VegetationError::InvalidRaster(format!("{width}x{height} grid with {} pixels", pixels.len())));
        }
        if !bounds.has_positive_extent() {
            return Err(VegetationError::InvalidRaster("bounds without positive extent".into()));
        }
        Ok(CrownRaster { addr, width, height, bounds, pixels })
    }

    /// Decodes a binary PGM.
    pub fn from_pgm(bytes: &[u8], addr: TileAddress, bounds: Rect) -> Result<Self, VegetationError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Pnm)
            .map_err(|e| VegetationError::InvalidRaster(e.to_string()))?
            .into_luma8();
        let (w, h) = img.dimensions();
        CrownRaster::new(addr, w as usize, h as usize, bounds, img.into_raw())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn pixel_size(&self) -> (f64, f64) {
        (self.bounds.width() / self.width as f64, self.bounds.height() / self.height as f64)
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> Point2D {
        let (pw, ph) = self.pixel_size();
        Point2D::new(self.bounds.min.x + (col as f64 + 0.5) * pw, self.bounds.max.y - (row as f64 + 0.5) * ph)
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.iter().all(|&v| v == 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        })
    }
}

impl FromStr for SizeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "small" => Ok(SizeClass::Small),
            "medium" => Ok(SizeClass::Medium),
            "large" => Ok(SizeClass::Large),
            other => Err(format!("unknown size class {other}")),
        }
    }
}

/// Upper bounds (inclusive) of the mean pixel value per size class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeTable {
    pub small_max: f64,
    pub medium_max: f64,
}

impl Default for SizeTable {
    fn default() -> Self {
        SizeTable { small_max: 85.0, medium_max: 170.0 }
    }
}

impl SizeTable {
    pub fn classify(&self, mean_value: f64) -> SizeClass {
        if mean_value <= self.small_max {
            SizeClass::Small
        } else if mean_value <= self.medium_max {
            SizeClass::Medium
        } else {
            SizeClass::Large
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrownParams {
    pub min_pixels: usize,
    pub sizes: SizeTable,
}

impl Default for CrownParams {
    fn default() -> Self {
        CrownParams { min_pixels: DEFAULT_MIN_PIXELS, sizes: SizeTable::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeInstance {
    /// `<tile>#<component>`; stable across runs.
    pub source_id: String,
    pub position: Point2D,
    pub elevation: Option<f64>,
    pub size_class: SizeClass,
    pub crown_radius: f64,
    pub pixel_count: usize,
    pub model_key: Option<String>,
    pub species: Option<String>,
}

/// 8-connected components of nonzero pixels, in scan order of their first
/// pixel. Each component lists its pixels as (col, row).
pub fn crown_components(raster: &CrownRaster) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (raster.width, raster.height);
    let mut label = vec![usize::MAX; w * h];
    let mut comps = Vec::new();
    for start in 0..w * h {
        if raster.pixels[start] == 0 || label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut pixels = Vec::new();
        let mut stack = vec![start];
        label[start] = id;
        while let Some(i) = stack.pop() {
            let (c, r) = (i % w, i / w);
            pixels.push((c, r));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nc, nr) = (c as i64 + dc, r as i64 + dr);
                    if nc < 0 || nr < 0 || nc >= w as i64 || nr >= h as i64 {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if raster.pixels[j] != 0 && label[j] == usize::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        pixels.sort_unstable_by_key(|&(c, r)| (r, c));
        comps.push(pixels);
    }
    comps
}

struct Summary {
    centroid: Point2D,
    count: usize,
    value_sum: u64,
    area: f64,
}

impl Summary {
    fn instance(&self, source_id: String, sizes: &SizeTable) -> TreeInstance {
        TreeInstance {
            source_id,
            position: self.centroid,
            elevation: None,
            size_class: sizes.classify(self.value_sum as f64 / self.count as f64),
            crown_radius: (self.area / std::f64::consts::PI).sqrt(),
            pixel_count: self.count,
            model_key: None,
            species: None,
        }
    }
}

fn summarize<'a>(parts: impl IntoIterator<Item = (&'a CrownRaster, &'a [(usize, usize)])>) -> Summary {
    let (mut sx, mut sy, mut count, mut value_sum, mut area) = (0.0, 0.0, 0usize, 0u64, 0.0);
    for (raster, pixels) in parts {
        let (pw, ph) = raster.pixel_size();
        for &(c, r) in pixels {
            let p = raster.pixel_center(c, r);
            sx += p.x;
            sy += p.y;
            value_sum += u64::from(raster.get(c, r));
            area += pw * ph;
        }
        count += pixels.len();
    }
    Summary { centroid: Point2D::new(sx / count as f64, sy / count as f64), count, value_sum, area }
}

fn source_id(addr: &TileAddress, component: usize) -> String {
    format!("{addr}#{component}")
}

/// One unplaced instance per crown of at least `min_pixels` pixels.
pub fn detect_crowns(raster: &CrownRaster, params: &CrownParams) -> Vec<TreeInstance> {
    crown_components(raster)
        .iter()
        .enumerate()
        .filter(|(_, px)| px.len() >= params.min_pixels.max(1))
        .map(|(k, px)| summarize([(raster, px.as_slice())]).instance(source_id(&raster.addr, k), &params.sizes))
        .collect()
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn tiling_error(a: &TileAddress, b: &TileAddress, reason: impl Into<String>) -> VegetationError {
    VegetationError::InconsistentTiling { a: a.to_string(), b: b.to_string(), reason: reason.into() }
}

/// Checks that address neighbors abut exactly on a common pixel lattice and
/// returns each tile's pixel offset (col, row) relative to the first tile.
fn lattice_offsets(tiles: &[&CrownRaster]) -> Result<Vec<(i64, i64)>, VegetationError> {
    let first = tiles[0];
    let mut widths: BTreeMap<u32, usize> = BTreeMap::new();
    let mut heights: BTreeMap<u32, usize> = BTreeMap::new();
    for t in tiles {
        if t.addr.zoom != first.addr.zoom || t.addr.layer != first.addr.layer {
            return Err(tiling_error(&first.addr, &t.addr, "tiles differ in zoom or layer"));
        }
        if *widths.entry(t.addr.x).or_insert(t.width) != t.width {
            return Err(tiling_error(&first.addr, &t.addr, "tiles of one column differ in width"));
        }
        if *heights.entry(t.addr.y).or_insert(t.height) != t.height {
            return Err(tiling_error(&first.addr, &t.addr, "tiles of one row differ in height"));
        }
    }
    // Pixel lattice from the addresses; absent columns or rows keep a gap so
    // tiles across them never touch.
    let starts = |sizes: &BTreeMap<u32, usize>| {
        let mut out = BTreeMap::new();
        let mut acc = 0i64;
        let mut prev: Option<u32> = None;
        for (&k, &n) in sizes {
            if let Some(p) = prev {
                if k > p + 1 {
                    acc += 1;
                }
            }
            out.insert(k, acc);
            acc += n as i64;
            prev = Some(k);
        }
        out
    };
    let (xs, ys) = (starts(&widths), starts(&heights));
    let offsets: Vec<(i64, i64)> = tiles.iter().map(|t| (xs[&t.addr.x], ys[&t.addr.y])).collect();
    let close = |a: f64, b: f64, scale: f64| (a - b).abs() <= 1e-6 * scale;
    for a in tiles {
        let (pw, ph) = a.pixel_size();
        for b in tiles {
            if b.addr.x == a.addr.x + 1 && b.addr.y == a.addr.y {
                let ok = close(b.bounds.min.x, a.bounds.max.x, pw)
                    && close(b.bounds.min.y, a.bounds.min.y, ph)
                    && close(b.bounds.max.y, a.bounds.max.y, ph);
                if !ok {
                    return Err(tiling_error(&a.addr, &b.addr, "east neighbor does not share the edge"));
                }
            }
            if b.addr.y == a.addr.y + 1 && b.addr.x == a.addr.x {
                let ok = close(b.bounds.max.y, a.bounds.min.y, ph)
                    && close(b.bounds.min.x, a.bounds.min.x, pw)
                    && close(b.bounds.max.x, a.bounds.max.x, pw);
                if !ok {
                    return Err(tiling_error(&a.addr, &b.addr, "south neighbor does not share the edge"));
                }
            }
        }
    }
    Ok(offsets)
}

/// Joins crowns cut by tile seams. Components touching a shared edge are
/// matched when their boundary pixel runs overlap under 8-adjacency; each
/// matched group becomes one instance over the pixel union. Instances not
/// involved in a merge are returned unchanged.
pub fn merge_cross_tile(
    per_tile: &BTreeMap<TileAddress, Vec<TreeInstance>>,
    rasters: &BTreeMap<TileAddress, CrownRaster>,
    params: &CrownParams,
) -> Result<Vec<TreeInstance>, VegetationError> {
    let mut out: Vec<TreeInstance> = per_tile.iter().filter(|(a, _)| !rasters.contains_key(*a)).flat_map(|(_, v)| v.clone()).collect();
    let tiles: Vec<&CrownRaster> = rasters.values().collect();
    if tiles.is_empty() {
        return Ok(out);
    }
    let offsets = lattice_offsets(&tiles)?;
    let comps: Vec<Vec<Vec<(usize, usize)>>> = tiles.iter().map(|t| crown_components(t)).collect();

    // Global node id per (tile, component) and a pixel lookup on seams.
    let mut base = Vec::with_capacity(tiles.len());
    let mut total = 0;
    for c in &comps {
        base.push(total);
        total += c.len();
    }
    let mut owner: HashMap<(i64, i64), usize> = HashMap::new();
    for (t, tile) in tiles.iter().enumerate() {
        for (k, px) in comps[t].iter().enumerate() {
            for &(c, r) in px {
                if c == 0 || r == 0 || c + 1 == tile.width || r + 1 == tile.height {
                    owner.insert((offsets[t].0 + c as i64, offsets[t].1 + r as i64), base[t] + k);
                }
            }
        }
    }
    let mut uf = UnionFind((0..total).collect());
    let mut touched = vec![false; total];
    for (&(gx, gy), &node) in &owner {
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(&other) = owner.get(&(gx + dx, gy + dy)) {
                    if other != node && tile_of(&base, other) != tile_of(&base, node) {
                        uf.union(node, other);
                        touched[node] = true;
                        touched[other] = true;
                    }
                }
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (t, c) in comps.iter().enumerate() {
        for k in 0..c.len() {
            let root = uf.find(base[t] + k);
            groups.entry(root).or_default().push((t, k));
        }
    }
    let existing: HashMap<&str, &TreeInstance> = per_tile.values().flatten().map(|i| (i.source_id.as_str(), i)).collect();
    for members in groups.values() {
        let (t0, k0) = members[0];
        let id = source_id(&tiles[t0].addr, k0);
        if members.len() == 1 && !touched[base[t0] + k0] {
            if let Some(inst) = existing.get(id.as_str()) {
                out.push((*inst).clone());
            }
            continue;
        }
        let summary = summarize(members.iter().map(|&(t, k)| (tiles[t], comps[t][k].as_slice())));
        if summary.count < params.min_pixels.max(1) {
            continue;
        }
        let mut inst = summary.instance(id, &params.sizes);
        inst.species =
            members.iter().find_map(|&(t, k)| existing.get(source_id(&tiles[t].addr, k).as_str()).and_then(|i| i.species.clone()));
        out.push(inst);
    }
    Ok(out)
}

fn tile_of(base: &[usize], node: usize) -> usize {
    base.partition_point(|&b| b <= node) - 1
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Placement {
    pub trees: Vec<TreeInstance>,
    pub dropped_on_water: usize,
    pub dropped_outside: usize,
}

pub fn model_key(size: SizeClass, source_id: &str, seed: u64) -> String {
    format!("tree_{size}_{}", seeded_index(seed, source_id, MODEL_VARIANTS))
}

/// Sets elevations and model keys; trees over water or outside the land
/// cover extent are dropped and counted.
pub fn place_trees(instances: &[TreeInstance], hf: &HeightField, landcover: &LandCoverRaster, seed: u64) -> Placement {
    let mut out = Placement::default();
    for inst in instances {
        match class_at(landcover, inst.position) {
            Err(_) => out.dropped_outside += 1,
            Ok(WATER) => out.dropped_on_water += 1,
            Ok(_) => {
                let z = hf.sample(inst.position).unwrap_or_else(|_| hf.sample_lenient(inst.position, 0.0));
                let mut placed = inst.clone();
                placed.elevation = Some(z);
                placed.model_key = Some(model_key(inst.size_class, &inst.source_id, seed));
                out.trees.push(placed);
            }
        }
    }
    out
}

#[derive(Serialize)]
struct CsvRow<'a> {
    x: f64,
    y: f64,
    z: Option<f64>,
    size_class: SizeClass,
    crown_radius: f64,
    model_key: Option<&'a str>,
}

/// Delimited export with columns x, y, z, size_class, crown_radius, model_key.
pub fn write_tree_csv(trees: &[TreeInstance]) -> Result<String, VegetationError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in trees {
        w.serialize(CsvRow {
            x: t.position.x,
            y: t.position.y,
            z: t.elevation,
            size_class: t.size_class,
            crown_radius: t.crown_radius,
            model_key: t.model_key.as_deref(),
        })
        .map_err(|e| VegetationError::Export(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| VegetationError::Export(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| VegetationError::Export(e.to_string()))
}

#[cfg(test)]
mod tests;
