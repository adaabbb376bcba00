use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::geom::{GeoPoint, Point2D, Rect, SceneProjection};

pub const MAX_ZOOM: u8 = 24;

/// Slippy-map tile of one source layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileAddress {
    pub zoom: u8,
    pub x: u32,
    pub y: u32,
    pub layer: String,
}

impl TileAddress {
    pub fn new(zoom: u8, x: u32, y: u32, layer: &str) -> Result<Self, IngestError> {
        if zoom > MAX_ZOOM {
            return Err(IngestError::InvalidAddress(format!("zoom {zoom} above {MAX_ZOOM}")));
        }
        let n = 1u64 << zoom;
        if u64::from(x) >= n || u64::from(y) >= n {
            return Err(IngestError::InvalidAddress(format!("tile {x}/{y} outside zoom {zoom}")));
        }
        Ok(TileAddress { zoom, x, y, layer: layer.to_string() })
    }

    /// Longitude/latitude extent in degrees as (west, south, east, north).
    pub fn geo_bounds(&self) -> Rect {
        let n = (1u64 << self.zoom) as f64;
        let lon = |x: f64| x / n * 360.0 - 180.0;
        let lat = |y: f64| (PI * (1.0 - 2.0 * y / n)).sinh().atan().to_degrees();
        Rect::new(lon(self.x as f64), lat(self.y as f64 + 1.0), lon(self.x as f64 + 1.0), lat(self.y as f64))
    }

    /// Footprint in scene coordinates. Under the equirectangular frame the
    /// tile stays an axis-aligned rectangle.
    pub fn scene_bounds(&self, proj: &dyn SceneProjection) -> Result<Rect, IngestError> {
        let g = self.geo_bounds();
        let corner = |lon: f64, lat: f64| -> Result<Point2D, IngestError> {
            let p = GeoPoint::new(lat, lon).map_err(|e| IngestError::InvalidAddress(e.to_string()))?;
            proj.to_scene(p).map_err(|e| IngestError::InvalidAddress(e.to_string()))
        };
        let pts = [corner(g.min.x, g.min.y)?, corner(g.max.x, g.max.y)?];
        Ok(Rect::from_points(pts).expect("two points"))
    }

    /// Path `<z>/<x>/<y>.<ext>` below the source's root.
    pub fn path(&self, ext: &str) -> String {
        format!("{}/{}/{}.{ext}", self.zoom, self.x, self.y)
    }
}

impl fmt::Display for TileAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}", self.layer, self.zoom, self.x, self.y)
    }
}

fn tile_x(lon: f64, n: f64) -> f64 {
    (lon + 180.0) / 360.0 * n
}

fn tile_y(lat: f64, n: f64) -> f64 {
    let r = lat.to_radians();
    (1.0 - (r.tan() + 1.0 / r.cos()).ln() / PI) / 2.0 * n
}

/// Tiles of `layer` at `zoom` overlapping a scene region, row-major from
/// the north-west.
pub fn tiles_covering(region: &Rect, zoom: u8, layer: &str, proj: &dyn SceneProjection) -> Result<Vec<TileAddress>, IngestError> {
    let sw = proj.to_geo(region.min);
    let ne = proj.to_geo(region.max);
    let n = (1u64 << zoom.min(MAX_ZOOM)) as f64;
    let last = n as u32 - 1;
    let clamp = |v: f64| (v.floor().max(0.0) as u32).min(last);
    // Exclusive upper edges so that a region ending on a tile seam does not
    // pull in the next tile.
    let (x0, x1) = (clamp(tile_x(sw.lon, n)), clamp((tile_x(ne.lon, n) - 1e-9).max(tile_x(sw.lon, n))));
    let (y0, y1) = (clamp(tile_y(ne.lat, n)), clamp((tile_y(sw.lat, n) - 1e-9).max(tile_y(ne.lat, n))));
    let mut out = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            out.push(TileAddress::new(zoom, x, y, layer)?);
        }
    }
    Ok(out)
}
