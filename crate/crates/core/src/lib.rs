//! Deterministic object-based 3D scene generation from open geodata.

pub mod buildings;
pub mod geom;
pub mod hydro;
pub mod ingest;
pub mod landcover;
pub mod pipeline;
pub mod scene;
pub mod terrain;
pub mod transit;
pub mod util;
pub mod vegetation;
