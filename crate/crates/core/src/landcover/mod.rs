//! Land-cover class table and the N×N class raster sampled from features.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{earcut_triangulate, point_in_triangle, ClassCode, Point2D, Rect};
use crate::ingest::FeatureCollection;

pub const WATER: ClassCode = 0;
pub const GRASS: ClassCode = 1;
pub const UNKNOWN: ClassCode = 255;
pub const DEFAULT_RASTER_SIZE: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandcoverError {
    #[error("point ({x}, {y}) outside raster bounds")]
    OutOfBounds { x: f64, y: f64 },
    #[error("class table line {line}: {msg}")]
    ClassTable { line: usize, msg: String },
    #[error("raster size must be at least 1")]
    EmptyRaster,
}

/// Overlap priority group. Earlier variants win.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Water,
    Infrastructure,
    Vegetation,
    Land,
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "water" => Ok(Category::Water),
            "infrastructure" => Ok(Category::Infrastructure),
            "vegetation" => Ok(Category::Vegetation),
            "land" => Ok(Category::Land),
            other => Err(format!("unknown category {other:?}")),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Water => "water",
            Category::Infrastructure => "infrastructure",
            Category::Vegetation => "vegetation",
            Category::Land => "land",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandCoverClass {
    pub code: ClassCode,
    pub name: String,
    pub texture_key: String,
    pub category: Category,
}

/// Code-indexed class definitions. Code 0 is always water.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTable {
    classes: BTreeMap<ClassCode, LandCoverClass>,
}

impl Default for ClassTable {
    fn default() -> Self {
        const DEFAULT: &str = "\
0 water water_surface water
1 grass grass_meadow vegetation
2 cycle_lane asphalt_red infrastructure
3 road asphalt infrastructure
4 forest forest_floor vegetation
5 farmland soil land
6 built_up paving land
7 sand sand land
";
        DEFAULT.parse().expect("built-in class table parses")
    }
}

impl FromStr for ClassTable {
    type Err = LandcoverError;

    /// One class per line: `code name texture_key [category]`. Blank lines and
    /// lines starting with `#` are skipped. A missing category is water for
    /// code 0 and land otherwise.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut classes = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| LandcoverError::ClassTable { line: i + 1, msg };
            let cols: Vec<&str> = line.split_whitespace().collect();
            if !(3..=4).contains(&cols.len()) {
                return Err(err(format!("expected 3 or 4 columns, found {}", cols.len())));
            }
            let code: ClassCode = cols[0].parse().map_err(|_| err(format!("bad code {:?}", cols[0])))?;
            if code == UNKNOWN {
                return Err(err("code 255 is reserved for unknown cells".into()));
            }
            let category = match cols.get(3) {
                Some(c) => c.parse().map_err(err)?,
                None if code == WATER => Category::Water,
                None => Category::Land,
            };
            if code == WATER && category != Category::Water {
                return Err(err("code 0 is reserved for water".into()));
            }
            let class = LandCoverClass { code, name: cols[1].to_string(), texture_key: cols[2].to_string(), category };
            if classes.insert(code, class).is_some() {
                return Err(err(format!("duplicate code {code}")));
            }
        }
        Ok(ClassTable { classes })
    }
}

impl fmt::Display for ClassTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.classes.values() {
            writeln!(f, "{} {} {} {}", c.code, c.name, c.texture_key, c.category)?;
        }
        Ok(())
    }
}

impl ClassTable {
    pub fn get(&self, code: ClassCode) -> Option<&LandCoverClass> {
        self.classes.get(&code)
    }

    pub fn by_name(&self, name: &str) -> Option<&LandCoverClass> {
        self.classes.values().find(|c| c.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LandCoverClass> {
        self.classes.values()
    }

    /// Sort key for overlap resolution; smaller wins. Codes missing from the
    /// table rank after every known class.
    pub fn priority(&self, code: ClassCode) -> (u8, ClassCode) {
        match self.classes.get(&code) {
            Some(c) => (c.category as u8, code),
            None => (u8::MAX, code),
        }
    }
}

/// N×N grid of class codes over `bounds`. Row 0 is the southern row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandCoverRaster {
    pub size: usize,
    pub bounds: Rect,
    pub cells: Vec<ClassCode>,
    pub unknown_code: ClassCode,
}

impl LandCoverRaster {
    pub fn filled(size: usize, bounds: Rect, code: ClassCode) -> Self {
        LandCoverRaster { size, bounds, cells: vec![code; size * size], unknown_code: UNKNOWN }
    }

    pub fn cell_width(&self) -> f64 {
        self.bounds.width() / self.size as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.bounds.height() / self.size as f64
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> ClassCode {
        self.cells[row * self.size + col]
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Point2D {
        Point2D::new(
            self.bounds.min.x + (col as f64 + 0.5) * self.cell_width(),
            self.bounds.min.y + (row as f64 + 0.5) * self.cell_height(),
        )
    }

    pub fn cell_rect(&self, col: usize, row: usize) -> Rect {
        let (w, h) = (self.cell_width(), self.cell_height());
        let x0 = self.bounds.min.x + col as f64 * w;
        let y0 = self.bounds.min.y + row as f64 * h;
        Rect::new(x0, y0, x0 + w, y0 + h)
    }

    /// Cell containing `p`. Points on a shared cell edge belong to the cell
    /// above or to the right; the max edges of the bounds map to the last
    /// cell.
    pub fn cell_of(&self, p: Point2D) -> Result<(usize, usize), LandcoverError> {
        if !self.bounds.contains(p) {
            return Err(LandcoverError::OutOfBounds { x: p.x, y: p.y });
        }
        let col = (((p.x - self.bounds.min.x) / self.cell_width()).floor() as usize).min(self.size - 1);
        let row = (((p.y - self.bounds.min.y) / self.cell_height()).floor() as usize).min(self.size - 1);
        Ok((col, row))
    }

    pub fn count(&self, code: ClassCode) -> usize {
        self.cells.iter().filter(|&&c| c == code).count()
    }

    /// Binary 8-bit PGM with the north row first; pixel value = class code.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.size, self.size).into_bytes();
        for row in (0..self.size).rev() {
            out.extend_from_slice(&self.cells[row * self.size..(row + 1) * self.size]);
        }
        out
    }
}

pub fn class_at(raster: &LandCoverRaster, p: Point2D) -> Result<ClassCode, LandcoverError> {
    let (col, row) = raster.cell_of(p)?;
    Ok(raster.get(col, row))
}

struct PreparedTriangle {
    tri: [Point2D; 3],
    bbox: Rect,
    rank: (u8, ClassCode),
    code: ClassCode,
}

const BAND_ROWS: usize = 16;

/// Samples each cell center against the triangulated features. A cell takes
/// the class of the highest-priority feature containing its center, or
/// [`UNKNOWN`] when none does.
pub fn rasterize_classes(fc: &FeatureCollection, n: usize, bounds: Rect, table: &ClassTable) -> Result<LandCoverRaster, LandcoverError> {
    if n == 0 {
        return Err(LandcoverError::EmptyRaster);
    }
    let tris: Vec<PreparedTriangle> = fc
        .polygons()
        .filter(|p| p.bounds().intersection(&bounds).is_some())
        .flat_map(|poly| {
            let mesh = earcut_triangulate(poly);
            let rank = table.priority(poly.class_code);
            (0..mesh.len())
                .map(|t| {
                    let tri = mesh.triangle(t);
                    PreparedTriangle { tri, bbox: Rect::from_points(tri).expect("three points"), rank, code: poly.class_code }
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let mut raster = LandCoverRaster::filled(n, bounds, UNKNOWN);
    let (cw, ch) = (raster.cell_width(), raster.cell_height());
    let (x0, y0) = (bounds.min.x, bounds.min.y);
    let center_x = |col: usize| x0 + (col as f64 + 0.5) * cw;
    let center_y = |row: usize| y0 + (row as f64 + 0.5) * ch;

    raster.cells.par_chunks_mut(BAND_ROWS * n).enumerate().for_each(|(band, cells)| {
        let row0 = band * BAND_ROWS;
        let rows = cells.len() / n;
        let (band_lo, band_hi) = (center_y(row0), center_y(row0 + rows - 1));
        let mut best: Vec<(u8, ClassCode)> = vec![(u8::MAX, UNKNOWN); cells.len()];
        for t in tris.iter().filter(|t| t.bbox.max.y >= band_lo && t.bbox.min.y <= band_hi) {
            // Conservative index ranges; the exact test happens per center.
            let c_lo = (((t.bbox.min.x - x0) / cw - 0.5).floor().max(0.0) as usize).min(n - 1);
            let c_hi = (((t.bbox.max.x - x0) / cw - 0.5).ceil().max(0.0) as usize).min(n - 1);
            let r_lo = (((t.bbox.min.y - y0) / ch - 0.5).floor().max(row0 as f64) as usize).min(row0 + rows - 1);
            let r_hi = (((t.bbox.max.y - y0) / ch - 0.5).ceil().max(row0 as f64) as usize).min(row0 + rows - 1);
            for row in r_lo..=r_hi {
                let cy = center_y(row);
                for col in c_lo..=c_hi {
                    let i = (row - row0) * n + col;
                    if t.rank >= best[i] {
                        continue;
                    }
                    let [a, b, c] = t.tri;
                    if point_in_triangle(Point2D::new(center_x(col), cy), a, b, c) {
                        best[i] = t.rank;
                        cells[i] = t.code;
                    }
                }
            }
        }
    });
    Ok(raster)
}
