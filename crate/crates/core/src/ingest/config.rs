use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::geom::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Landcover,
    Elevation,
    Buildings,
    Trees,
    Aerial,
}

impl SourceKind {
    pub const ALL: [SourceKind; 5] =
        [SourceKind::Landcover, SourceKind::Elevation, SourceKind::Buildings, SourceKind::Trees, SourceKind::Aerial];

    pub fn name(self) -> &'static str {
        match self {
            SourceKind::Landcover => "landcover",
            SourceKind::Elevation => "elevation",
            SourceKind::Buildings => "buildings",
            SourceKind::Trees => "trees",
            SourceKind::Aerial => "aerial",
        }
    }
}

/// Locator of one source.
///
/// `url` templates understand `{z}`, `{x}`, `{y}` for tiled sources and
/// `{minx}`, `{miny}` for gridded ones; the buildings url names the tileset
/// document and content references resolve against its directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSpec {
    pub enabled: bool,
    pub url: Option<String>,
    pub fixture_dir: Option<PathBuf>,
    /// Edge length of gridded source tiles in scene meters.
    pub tile_size: f64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec { enabled: true, url: None, fixture_dir: None, tile_size: 250.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub offline: bool,
    pub cache_dir: Option<PathBuf>,
    /// Root holding one sub-directory per source; per-source
    /// `fixture_dir` entries override it.
    pub fixture_dir: Option<PathBuf>,
    /// Zoom level of the tiled sources (land cover and trees).
    pub zoom: u8,
    /// Geographic anchor of metric source data: gridded tile names, grid
    /// headers and building coordinates. Unset means the scene origin.
    pub grid_origin: Option<GeoPoint>,
    pub landcover: SourceSpec,
    pub elevation: SourceSpec,
    pub buildings: SourceSpec,
    pub trees: SourceSpec,
    pub aerial: SourceSpec,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            offline: true,
            cache_dir: None,
            fixture_dir: None,
            zoom: 16,
            grid_origin: None,
            landcover: SourceSpec::default(),
            elevation: SourceSpec::default(),
            buildings: SourceSpec::default(),
            trees: SourceSpec::default(),
            aerial: SourceSpec::default(),
        }
    }
}

impl SourceConfig {
    pub fn offline_fixtures(dir: impl Into<PathBuf>) -> Self {
        SourceConfig { offline: true, fixture_dir: Some(dir.into()), ..Default::default() }
    }

    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        let cfg: SourceConfig = toml::from_str(text).map_err(|e| IngestError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn spec(&self, kind: SourceKind) -> &SourceSpec {
        match kind {
            SourceKind::Landcover => &self.landcover,
            SourceKind::Elevation => &self.elevation,
            SourceKind::Buildings => &self.buildings,
            SourceKind::Trees => &self.trees,
            SourceKind::Aerial => &self.aerial,
        }
    }

    pub fn spec_mut(&mut self, kind: SourceKind) -> &mut SourceSpec {
        match kind {
            SourceKind::Landcover => &mut self.landcover,
            SourceKind::Elevation => &mut self.elevation,
            SourceKind::Buildings => &mut self.buildings,
            SourceKind::Trees => &mut self.trees,
            SourceKind::Aerial => &mut self.aerial,
        }
    }

    pub fn fixture_root(&self, kind: SourceKind) -> Option<PathBuf> {
        self.spec(kind).fixture_dir.clone().or_else(|| self.fixture_dir.as_ref().map(|d| d.join(kind.name())))
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.zoom > super::MAX_ZOOM {
            return Err(IngestError::Config(format!("zoom {} above {}", self.zoom, super::MAX_ZOOM)));
        }
        for kind in SourceKind::ALL {
            let spec = self.spec(kind);
            if !spec.enabled {
                continue;
            }
            if !(spec.tile_size > 0.0 && spec.tile_size.is_finite()) {
                return Err(IngestError::Config(format!("{} tile_size must be positive", kind.name())));
            }
            if self.offline && self.fixture_root(kind).is_none() {
                return Err(IngestError::Config(format!("offline mode needs a fixture directory for {}", kind.name())));
            }
            if !self.offline && spec.url.is_none() && self.fixture_root(kind).is_none() {
                return Err(IngestError::Config(format!("{} has neither url nor fixture directory", kind.name())));
            }
        }
        Ok(())
    }
}
