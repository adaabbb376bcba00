//! Source adapters, disk cache and offline fixtures.

mod cache;
mod config;
mod features;
mod tile;
mod transport;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::buildings::{parse_tileset, ColorRaster, TilesetIndex};
use crate::geom::{Rect, SceneProjection};
use crate::landcover::ClassTable;
use crate::terrain::HeightField;
use crate::vegetation::CrownRaster;

pub use cache::DiskCache;
pub use config::{SourceConfig, SourceKind, SourceSpec};
pub use features::{parse_geojson, write_geojson, Feature, FeatureCollection};
pub use tile::{tiles_covering, TileAddress, MAX_ZOOM};
#[cfg(feature = "http")]
pub use transport::HttpTransport;
pub use transport::{default_network, CountingTransport, FileTransport, NoNetwork, Transport};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("source unavailable: {0}")]
    SourceUnavailable(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("invalid tile address: {0}")]
    InvalidAddress(String),
    #[error("fixture missing: {}", .0.display())]
    FixtureMissing(PathBuf),
    #[error("source disabled: {0}")]
    Disabled(&'static str),
    #[error("configuration: {0}")]
    Config(String),
    #[error("cache: {0}")]
    Cache(String),
}

/// Fetches and decodes every source through the cache. Offline mode only
/// ever touches the file transport.
pub struct Ingestor {
    cfg: SourceConfig,
    files: Arc<dyn Transport>,
    network: Arc<dyn Transport>,
    cache: Option<DiskCache>,
}

fn grid_origin(v: f64, size: f64) -> f64 {
    (v / size).floor() * size
}

fn grid_name(minx: f64, miny: f64) -> String {
    format!("{minx}_{miny}")
}

impl Ingestor {
    pub fn new(cfg: SourceConfig) -> Result<Self, IngestError> {
        Self::with_transports(cfg, Arc::new(FileTransport), default_network())
    }

    pub fn with_transports(cfg: SourceConfig, files: Arc<dyn Transport>, network: Arc<dyn Transport>) -> Result<Self, IngestError> {
        cfg.validate()?;
        let cache = cfg.cache_dir.as_ref().map(DiskCache::new);
        Ok(Ingestor { cfg, files, network, cache })
    }

    pub fn config(&self) -> &SourceConfig {
        &self.cfg
    }

    /// Resolves `rel` (fixture path) or the url template and fetches it,
    /// consulting the cache first.
    fn fetch(&self, kind: SourceKind, rel: &str, vars: &[(&str, String)]) -> Result<Vec<u8>, IngestError> {
        let spec = self.cfg.spec(kind);
        if !spec.enabled {
            return Err(IngestError::Disabled(kind.name()));
        }
        let (transport, locator) = match (&spec.url, self.cfg.offline) {
            (Some(template), false) => {
                let mut url = template.clone();
                for (k, v) in vars {
                    url = url.replace(&format!("{{{k}}}"), v);
                }
                (&self.network, url)
            }
            _ => {
                let root = self.cfg.fixture_root(kind).ok_or(IngestError::Disabled(kind.name()))?;
                (&self.files, root.join(rel).to_string_lossy().into_owned())
            }
        };
        let fetch = || transport.get(&locator);
        match &self.cache {
            Some(cache) => cache.get_or_fetch(kind.name(), &locator, fetch),
            None => fetch(),
        }
    }

    fn tile_vars(addr: &TileAddress) -> Vec<(&'static str, String)> {
        vec![("z", addr.zoom.to_string()), ("x", addr.x.to_string()), ("y", addr.y.to_string())]
    }

    pub fn fetch_vector_tile(
        &self,
        addr: &TileAddress,
        proj: &dyn SceneProjection,
        table: &ClassTable,
    ) -> Result<FeatureCollection, IngestError> {
        let bytes = self.fetch(SourceKind::Landcover, &addr.path("geojson"), &Self::tile_vars(addr))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| IngestError::Decode(e.to_string()))?;
        parse_geojson(text, proj, table, addr.scene_bounds(proj)?)
    }

    /// Land cover features of every tile overlapping `region`.
    pub fn fetch_landcover(&self, region: &Rect, proj: &dyn SceneProjection, table: &ClassTable) -> Result<FeatureCollection, IngestError> {
        let mut out = FeatureCollection::new(*region);
        for addr in tiles_covering(region, self.cfg.zoom, SourceKind::Landcover.name(), proj)? {
            out.extend(self.fetch_vector_tile(&addr, proj, table)?);
        }
        out.bounds = *region;
        Ok(out)
    }

    /// Grid tiles `<minx>_<miny>` of edge `tile_size` covering `region`.
    fn grid_tiles(&self, kind: SourceKind, region: &Rect) -> Vec<(f64, f64)> {
        let size = self.cfg.spec(kind).tile_size;
        let mut out = Vec::new();
        let mut y = grid_origin(region.min.y, size);
        while y < region.max.y {
            let mut x = grid_origin(region.min.x, size);
            while x < region.max.x {
                out.push((x, y));
                x += size;
            }
            y += size;
        }
        out
    }

    /// Elevation grid over `region`, mosaicked from source tiles and cropped.
    /// Missing samples stay nodata.
    pub fn load_heightgrid(&self, region: &Rect) -> Result<HeightField, IngestError> {
        let mut tiles = Vec::new();
        for (x, y) in self.grid_tiles(SourceKind::Elevation, region) {
            let name = grid_name(x, y);
            let vars = [("minx", x.to_string()), ("miny", y.to_string())];
            let bytes = self.fetch(SourceKind::Elevation, &format!("{name}.asc"), &vars)?;
            let text = std::str::from_utf8(&bytes).map_err(|e| IngestError::Decode(e.to_string()))?;
            tiles.push(HeightField::from_ascii_grid(text).map_err(|e| IngestError::Decode(format!("{name}: {e}")))?);
        }
        let mosaic = HeightField::mosaic(&tiles).map_err(|e| IngestError::Decode(e.to_string()))?;
        mosaic.crop(region).ok_or_else(|| IngestError::Decode("elevation does not cover the region".into()))
    }

    /// Building tileset; content references stay relative to the tileset.
    pub fn fetch_building_tileset(&self, proj: &dyn SceneProjection) -> Result<TilesetIndex, IngestError> {
        let bytes = self.fetch(SourceKind::Buildings, "tileset.json", &[])?;
        let text = std::str::from_utf8(&bytes).map_err(|e| IngestError::Decode(e.to_string()))?;
        parse_tileset(text, Some(proj)).map_err(|e| IngestError::Decode(e.to_string()))
    }

    /// Raw payload of one tileset content reference.
    pub fn fetch_b3dm(&self, uri: &str) -> Result<Vec<u8>, IngestError> {
        if uri.contains("..") || uri.starts_with('/') {
            return Err(IngestError::Decode(format!("content reference {uri} escapes the tileset")));
        }
        let spec = self.cfg.spec(SourceKind::Buildings);
        match (&spec.url, self.cfg.offline) {
            (Some(base), false) => {
                let dir = base.rsplit_once('/').map_or(base.as_str(), |(d, _)| d);
                let url = format!("{dir}/{uri}");
                let fetch = || self.network.get(&url);
                match &self.cache {
                    Some(cache) => cache.get_or_fetch(SourceKind::Buildings.name(), &url, fetch),
                    None => fetch(),
                }
            }
            _ => self.fetch(SourceKind::Buildings, uri, &[]),
        }
    }

    pub fn load_tree_raster(&self, addr: &TileAddress, proj: &dyn SceneProjection) -> Result<CrownRaster, IngestError> {
        let bytes = self.fetch(SourceKind::Trees, &addr.path("pgm"), &Self::tile_vars(addr))?;
        CrownRaster::from_pgm(&bytes, addr.clone(), addr.scene_bounds(proj)?).map_err(|e| IngestError::Decode(format!("{addr}: {e}")))
    }

    pub fn load_tree_rasters(&self, region: &Rect, proj: &dyn SceneProjection) -> Result<BTreeMap<TileAddress, CrownRaster>, IngestError> {
        tiles_covering(region, self.cfg.zoom, SourceKind::Trees.name(), proj)?
            .into_iter()
            .map(|a| self.load_tree_raster(&a, proj).map(|r| (a, r)))
            .collect()
    }

    /// Aerial imagery covering `region`, on the source tile lattice.
    pub fn load_aerial_image(&self, region: &Rect) -> Result<ColorRaster, IngestError> {
        let size = self.cfg.spec(SourceKind::Aerial).tile_size;
        let mut tiles = Vec::new();
        for (x, y) in self.grid_tiles(SourceKind::Aerial, region) {
            let name = grid_name(x, y);
            let vars = [("minx", x.to_string()), ("miny", y.to_string())];
            let bytes = self.fetch(SourceKind::Aerial, &format!("{name}.ppm"), &vars)?;
            let bounds = Rect::new(x, y, x + size, y + size);
            tiles.push(ColorRaster::from_ppm(&bytes, bounds).map_err(|e| IngestError::Decode(format!("{name}: {e}")))?);
        }
        ColorRaster::mosaic(&tiles).ok_or_else(|| IngestError::Decode("empty aerial region".into()))
    }
}
