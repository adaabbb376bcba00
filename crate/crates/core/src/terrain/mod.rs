//! Elevation grids, gap filling and viewpoint-driven LOD meshing.

mod fill;
mod heightfield;
mod lod;

use thiserror::Error;

pub use fill::{fill_gaps, fill_gaps_with, FillParams, FillReport};
pub use heightfield::{sample_height, HeightField, DEFAULT_NODATA};
pub use lod::{build_lod_mesh, LeafInfo, LodParams, TerrainMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TerrainError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("point ({x}, {y}) outside height field")]
    OutOfBounds { x: f64, y: f64 },
    #[error("no data around ({x}, {y})")]
    NoDataAt { x: f64, y: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("height field has no valid cells")]
    AllNoData,
}
