//! Local equirectangular tangent-plane projection between WGS84 and scene
//! meters.

use super::{GeoPoint, GeomError, Point2D};
use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const MAX_REGION_RADIUS_M: f64 = 100_000.0;

/// Converts between geographic and scene coordinates. Implementations other
/// than [`LocalFrame`] can supply a national grid transform.
pub trait SceneProjection: Send + Sync {
    fn to_scene(&self, g: GeoPoint) -> Result<Point2D, GeomError>;
    fn to_geo(&self, p: Point2D) -> GeoPoint;
}

/// Scene frame anchored at a geographic origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    pub origin: GeoPoint,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint) -> Self {
        LocalFrame { origin }
    }
}

impl SceneProjection for LocalFrame {
    fn to_scene(&self, g: GeoPoint) -> Result<Point2D, GeomError> {
        project_to_scene(g, self.origin)
    }

    fn to_geo(&self, p: Point2D) -> GeoPoint {
        unproject_from_scene(p, self.origin)
    }
}

fn project_unchecked(g: GeoPoint, origin: GeoPoint) -> Point2D {
    let lat0 = origin.lat.to_radians();
    Point2D::new(EARTH_RADIUS_M * lat0.cos() * (g.lon - origin.lon).to_radians(), EARTH_RADIUS_M * (g.lat - origin.lat).to_radians())
}

/// `x = R·cos(lat0)·Δlon`, `y = R·Δlat` with angles in radians.
pub fn project_to_scene(g: GeoPoint, origin: GeoPoint) -> Result<Point2D, GeomError> {
    let p = project_unchecked(g, origin);
    let d = p.x.hypot(p.y);
    if d > MAX_REGION_RADIUS_M {
        return Err(GeomError::OutOfRegion { distance_m: d, limit_m: MAX_REGION_RADIUS_M });
    }
    Ok(p)
}

pub fn unproject_from_scene(p: Point2D, origin: GeoPoint) -> GeoPoint {
    let lat0 = origin.lat.to_radians();
    GeoPoint { lat: origin.lat + (p.y / EARTH_RADIUS_M).to_degrees(), lon: origin.lon + (p.x / (EARTH_RADIUS_M * lat0.cos())).to_degrees() }
}
