use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::TerrainError;
use crate::geom::{Point2D, Rect};

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Uniform elevation grid. Row 0 is the southernmost row; `origin` is the
/// south-west corner of the south-west cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    pub ncols: usize,
    pub nrows: usize,
    pub origin: Point2D,
    pub cell_size: f64,
    pub values: Vec<f64>,
    pub nodata: f64,
    /// Cells whose value was produced by gap filling rather than measured.
    pub interpolated: Vec<bool>,
}

impl HeightField {
    pub fn new(ncols: usize, nrows: usize, origin: Point2D, cell_size: f64, values: Vec<f64>, nodata: f64) -> Result<Self, TerrainError> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(TerrainError::InvalidGrid(format!("cell size {cell_size} must be positive")));
        }
        if ncols == 0 || nrows == 0 || values.len() != ncols * nrows {
            return Err(TerrainError::InvalidGrid(format!("{} values for a {ncols}x{nrows} grid", values.len())));
        }
        Ok(HeightField { ncols, nrows, origin, cell_size, values, nodata, interpolated: vec![false; ncols * nrows] })
    }

    pub fn constant(ncols: usize, nrows: usize, origin: Point2D, cell_size: f64, z: f64) -> Self {
        Self::new(ncols, nrows, origin, cell_size, vec![z; ncols * nrows], DEFAULT_NODATA).expect("valid grid")
    }

    pub fn from_fn(ncols: usize, nrows: usize, origin: Point2D, cell_size: f64, f: impl Fn(Point2D) -> f64) -> Self {
        let mut values = Vec::with_capacity(ncols * nrows);
        for row in 0..nrows {
            for col in 0..ncols {
                values.push(f(Point2D::new(origin.x + (col as f64 + 0.5) * cell_size, origin.y + (row as f64 + 0.5) * cell_size)));
            }
        }
        Self::new(ncols, nrows, origin, cell_size, values, DEFAULT_NODATA).expect("valid grid")
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.ncols + col
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[self.index(col, row)]
    }

    pub fn set(&mut self, col: usize, row: usize, z: f64) {
        let i = self.index(col, row);
        self.values[i] = z;
    }

    #[inline]
    pub fn is_nodata_value(&self, v: f64) -> bool {
        v == self.nodata || !v.is_finite()
    }

    #[inline]
    pub fn is_valid(&self, col: usize, row: usize) -> bool {
        !self.is_nodata_value(self.get(col, row))
    }

    pub fn nodata_count(&self) -> usize {
        self.values.iter().filter(|&&v| self.is_nodata_value(v)).count()
    }

    pub fn valid_range(&self) -> Option<(f64, f64)> {
        let mut it = self.values.iter().copied().filter(|&v| !self.is_nodata_value(v));
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Point2D {
        Point2D::new(self.origin.x + (col as f64 + 0.5) * self.cell_size, self.origin.y + (row as f64 + 0.5) * self.cell_size)
    }

    pub fn extent(&self) -> Rect {
        Rect::new(
            self.origin.x,
            self.origin.y,
            self.origin.x + self.ncols as f64 * self.cell_size,
            self.origin.y + self.nrows as f64 * self.cell_size,
        )
    }

    /// Cell containing `p`, with the east and north extent edges mapped to
    /// the last column and row.
    pub fn cell_of(&self, p: Point2D) -> Option<(usize, usize)> {
        if !self.extent().contains(p) {
            return None;
        }
        let col = (((p.x - self.origin.x) / self.cell_size).floor() as usize).min(self.ncols - 1);
        let row = (((p.y - self.origin.y) / self.cell_size).floor() as usize).min(self.nrows - 1);
        Some((col, row))
    }

    /// Bilinear interpolation between the four surrounding cell centers.
    /// Within half a cell of the extent edge the nearest center row or column
    /// is used.
    pub fn sample(&self, p: Point2D) -> Result<f64, TerrainError> {
        if !self.extent().contains(p) {
            return Err(TerrainError::OutOfBounds { x: p.x, y: p.y });
        }
        let (c0, tx) = axis_weights((p.x - self.origin.x) / self.cell_size - 0.5, self.ncols);
        let (r0, ty) = axis_weights((p.y - self.origin.y) / self.cell_size - 0.5, self.nrows);
        let c1 = (c0 + 1).min(self.ncols - 1);
        let r1 = (r0 + 1).min(self.nrows - 1);
        let corners = [(c0, r0, (1.0 - tx) * (1.0 - ty)), (c1, r0, tx * (1.0 - ty)), (c0, r1, (1.0 - tx) * ty), (c1, r1, tx * ty)];
        let mut z = 0.0;
        for (c, r, w) in corners {
            if w == 0.0 {
                continue;
            }
            let v = self.get(c, r);
            if self.is_nodata_value(v) {
                return Err(TerrainError::NoDataAt { x: p.x, y: p.y });
            }
            z += w * v;
        }
        Ok(z)
    }

    /// Like [`HeightField::sample`] but clamps `p` into the extent and
    /// renormalizes over valid corners; falls back to `default` when none is.
    pub fn sample_lenient(&self, p: Point2D, default: f64) -> f64 {
        let e = self.extent();
        let q = Point2D::new(p.x.clamp(e.min.x, e.max.x), p.y.clamp(e.min.y, e.max.y));
        if let Ok(z) = self.sample(q) {
            return z;
        }
        let (c0, tx) = axis_weights((q.x - self.origin.x) / self.cell_size - 0.5, self.ncols);
        let (r0, ty) = axis_weights((q.y - self.origin.y) / self.cell_size - 0.5, self.nrows);
        let c1 = (c0 + 1).min(self.ncols - 1);
        let r1 = (r0 + 1).min(self.nrows - 1);
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for (c, r, w) in [(c0, r0, (1.0 - tx) * (1.0 - ty)), (c1, r0, tx * (1.0 - ty)), (c0, r1, (1.0 - tx) * ty), (c1, r1, tx * ty)] {
            let v = self.get(c, r);
            if w > 0.0 && !self.is_nodata_value(v) {
                acc += w * v;
                wsum += w;
            }
        }
        if wsum > 0.0 {
            acc / wsum
        } else {
            default
        }
    }

    /// Cells whose footprint overlaps `region`; `None` when nothing overlaps.
    pub fn crop(&self, region: &Rect) -> Option<HeightField> {
        let e = self.extent();
        let r = e.intersection(region)?;
        let c0 = ((r.min.x - self.origin.x) / self.cell_size).floor().max(0.0) as usize;
        let r0 = ((r.min.y - self.origin.y) / self.cell_size).floor().max(0.0) as usize;
        let c1 = (((r.max.x - self.origin.x) / self.cell_size).ceil() as usize).min(self.ncols);
        let r1 = (((r.max.y - self.origin.y) / self.cell_size).ceil() as usize).min(self.nrows);
        if c1 <= c0 || r1 <= r0 {
            return None;
        }
        let mut values = Vec::with_capacity((c1 - c0) * (r1 - r0));
        let mut interpolated = Vec::with_capacity(values.capacity());
        for row in r0..r1 {
            for col in c0..c1 {
                values.push(self.get(col, row));
                interpolated.push(self.interpolated[self.index(col, row)]);
            }
        }
        Some(HeightField {
            ncols: c1 - c0,
            nrows: r1 - r0,
            origin: Point2D::new(self.origin.x + c0 as f64 * self.cell_size, self.origin.y + r0 as f64 * self.cell_size),
            cell_size: self.cell_size,
            values,
            nodata: self.nodata,
            interpolated,
        })
    }

    /// Combines grid-aligned tiles with equal cell size into one grid covering
    /// their union. Uncovered cells are nodata; overlapping cells take the
    /// first tile's value.
    pub fn mosaic(tiles: &[HeightField]) -> Result<HeightField, TerrainError> {
        let first = tiles.first().ok_or_else(|| TerrainError::InvalidGrid("no tiles to mosaic".into()))?;
        let cs = first.cell_size;
        let mut bounds = first.extent();
        for t in &tiles[1..] {
            if (t.cell_size - cs).abs() > 1e-9 * cs {
                return Err(TerrainError::InvalidGrid(format!("cell size {} differs from {cs}", t.cell_size)));
            }
            let off_x = (t.origin.x - first.origin.x) / cs;
            let off_y = (t.origin.y - first.origin.y) / cs;
            if (off_x - off_x.round()).abs() > 1e-6 || (off_y - off_y.round()).abs() > 1e-6 {
                return Err(TerrainError::InvalidGrid("tiles are not aligned to a common grid".into()));
            }
            bounds = bounds.union(&t.extent());
        }
        let ncols = (bounds.width() / cs).round() as usize;
        let nrows = (bounds.height() / cs).round() as usize;
        let nodata = first.nodata;
        let mut values = vec![nodata; ncols * nrows];
        let mut filled = vec![false; ncols * nrows];
        let mut interpolated = vec![false; ncols * nrows];
        for t in tiles {
            let c_off = ((t.origin.x - bounds.min.x) / cs).round() as usize;
            let r_off = ((t.origin.y - bounds.min.y) / cs).round() as usize;
            for row in 0..t.nrows {
                for col in 0..t.ncols {
                    let i = (row + r_off) * ncols + col + c_off;
                    if filled[i] {
                        continue;
                    }
                    let v = t.get(col, row);
                    values[i] = if t.is_nodata_value(v) { nodata } else { v };
                    interpolated[i] = t.interpolated[t.index(col, row)];
                    filled[i] = true;
                }
            }
        }
        Ok(HeightField { ncols, nrows, origin: bounds.min, cell_size: cs, values, nodata, interpolated })
    }

    /// Parses an ESRI ASCII grid.
    pub fn from_ascii_grid(text: &str) -> Result<HeightField, TerrainError> {
        let mut header = std::collections::HashMap::new();
        let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
        while let Some(line) = lines.peek() {
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default().to_ascii_lowercase();
            if key.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                let val: f64 =
                    parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| TerrainError::Parse(format!("bad header line {line:?}")))?;
                header.insert(key, val);
                lines.next();
            } else {
                break;
            }
        }
        let get = |k: &str| header.get(k).copied().ok_or_else(|| TerrainError::Parse(format!("missing header field {k}")));
        let ncols = get("ncols")? as usize;
        let nrows = get("nrows")? as usize;
        let cell_size = get("cellsize")?;
        let nodata = header.get("nodata_value").copied().unwrap_or(DEFAULT_NODATA);
        let x0 = match (header.get("xllcorner"), header.get("xllcenter")) {
            (Some(&v), _) => v,
            (None, Some(&v)) => v - 0.5 * cell_size,
            _ => return Err(TerrainError::Parse("missing header field xllcorner".into())),
        };
        let y0 = match (header.get("yllcorner"), header.get("yllcenter")) {
            (Some(&v), _) => v,
            (None, Some(&v)) => v - 0.5 * cell_size,
            _ => return Err(TerrainError::Parse("missing header field yllcorner".into())),
        };
        let mut file_rows: Vec<f64> = Vec::with_capacity(ncols * nrows);
        for line in lines {
            for tok in line.split_whitespace() {
                file_rows.push(tok.parse().map_err(|_| TerrainError::Parse(format!("bad value {tok:?}")))?);
            }
        }
        if file_rows.len() != ncols * nrows {
            return Err(TerrainError::Parse(format!("expected {} values, found {}", ncols * nrows, file_rows.len())));
        }
        // File rows run north to south.
        let mut values = Vec::with_capacity(ncols * nrows);
        for row in (0..nrows).rev() {
            values.extend_from_slice(&file_rows[row * ncols..(row + 1) * ncols]);
        }
        HeightField::new(ncols, nrows, Point2D::new(x0, y0), cell_size, values, nodata)
    }

    pub fn to_ascii_grid(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ncols {}", self.ncols);
        let _ = writeln!(s, "nrows {}", self.nrows);
        let _ = writeln!(s, "xllcorner {}", self.origin.x);
        let _ = writeln!(s, "yllcorner {}", self.origin.y);
        let _ = writeln!(s, "cellsize {}", self.cell_size);
        let _ = writeln!(s, "NODATA_value {}", self.nodata);
        for row in (0..self.nrows).rev() {
            let line: Vec<String> = (0..self.ncols)
                .map(|col| {
                    let v = self.get(col, row);
                    if self.is_nodata_value(v) {
                        format!("{}", self.nodata)
                    } else {
                        format!("{v}")
                    }
                })
                .collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Lower cell index and fractional weight along one axis, clamped to the
/// center hull.
fn axis_weights(f: f64, n: usize) -> (usize, f64) {
    if n == 1 || f <= 0.0 {
        return (0, 0.0);
    }
    let max = (n - 1) as f64;
    if f >= max {
        return (n - 2, 1.0);
    }
    let i = f.floor();
    (i as usize, f - i)
}

/// Bilinear height at `p`; see [`HeightField::sample`].
pub fn sample_height(hf: &HeightField, p: Point2D) -> Result<f64, TerrainError> {
    hf.sample(p)
}
