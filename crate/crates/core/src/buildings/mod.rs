//! 3D-tile building payloads: tileset index, b3dm containers, per-building
//! meshes, facade and roof UVs, roof colors and facade texture choice.

mod b3dm;
pub mod glb;
mod roof;
mod surface;
mod texture;
mod tileset;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use b3dm::{parse_b3dm, write_b3dm, B3dmPayload, Table, HEADER_LEN};
pub use roof::{assign_roof_color, roof_pixels, ColorRaster, FALLBACK_ROOF_COLOR, MIN_ROOF_PIXELS};
pub use surface::{compute_uv, facade_frames, FacadeFrame, ROOF_MAX_TILT_DEG};
pub use texture::TextureLibrary;
pub use tileset::{parse_tileset, TileNode, TilesetIndex};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildingError {
    #[error("not a b3dm container")]
    BadMagic,
    #[error("unsupported b3dm version {0}")]
    UnsupportedVersion(u32),
    #[error("length field says {header} bytes, found {actual}")]
    LengthMismatch { header: usize, actual: usize },
    #[error("malformed table: {0}")]
    MalformedTable(String),
    #[error("glb: {0}")]
    Glb(String),
    #[error("unsupported glTF content: {0}")]
    UnsupportedFeature(String),
    #[error("geometry carries no batch id attribute")]
    MissingBatchId,
    #[error("triangle {triangle} spans several batch ids")]
    InconsistentBatch { triangle: usize },
    #[error("triangle {triangle} has zero area")]
    DegenerateFace { triangle: usize },
    #[error("tileset: {0}")]
    Tileset(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingMesh {
    pub id: String,
    pub batch_id: u32,
    /// Scene meters, z up.
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
    /// Per-vertex texture coordinates; empty until [`compute_uv`] runs.
    pub uvs: Vec<[f64; 2]>,
    pub roof_faces: Vec<usize>,
    pub roof_color: [u8; 3],
    /// Aerial pixels that determined `roof_color`; 0 when the fallback
    /// color is used.
    pub roof_pixel_count: usize,
    pub texture_key: Option<String>,
    pub attributes: BTreeMap<String, String>,
}

impl BuildingMesh {
    pub fn new(id: impl Into<String>, vertices: Vec<[f64; 3]>, triangles: Vec<[u32; 3]>) -> Self {
        BuildingMesh {
            id: id.into(),
            batch_id: 0,
            vertices,
            triangles,
            uvs: Vec::new(),
            roof_faces: Vec::new(),
            roof_color: FALLBACK_ROOF_COLOR,
            roof_pixel_count: 0,
            texture_key: None,
            attributes: BTreeMap::new(),
        }
    }

    pub fn triangle_points(&self, t: usize) -> [[f64; 3]; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn footprint(&self) -> Option<crate::geom::Rect> {
        crate::geom::Rect::from_points(self.vertices.iter().map(|v| crate::geom::Point2D::new(v[0], v[1])))
    }

    pub fn translated(&self, d: [f64; 3]) -> BuildingMesh {
        let mut m = self.clone();
        for v in &mut m.vertices {
            for k in 0..3 {
                v[k] += d[k];
            }
        }
        m
    }

    /// Rotation by `angle` radians about the vertical axis through `pivot`.
    pub fn rotated_about_up(&self, angle: f64, pivot: [f64; 2]) -> BuildingMesh {
        let (s, c) = angle.sin_cos();
        let mut m = self.clone();
        for v in &mut m.vertices {
            let (x, y) = (v[0] - pivot[0], v[1] - pivot[1]);
            v[0] = pivot[0] + c * x - s * y;
            v[1] = pivot[1] + s * x + c * y;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitOptions {
    /// Batch-table column holding the building identifier.
    pub id_column: String,
    /// Vertex attribute carrying the batch id.
    pub batch_attribute: String,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions { id_column: "id".into(), batch_attribute: "_BATCHID".into() }
    }
}

/// glTF content is y-up; scene geometry is z-up.
pub fn y_up_to_z_up(p: [f64; 3]) -> [f64; 3] {
    [p[0], -p[2], p[1]]
}

pub fn z_up_to_y_up(p: [f64; 3]) -> [f64; 3] {
    [p[0], p[2], -p[1]]
}

/// Splits batched geometry into one mesh per batch id, in ascending id
/// order. Every vertex goes to the mesh of its own batch id, so vertex
/// counts are conserved.
pub fn split_by_batch(payload: &B3dmPayload, opts: &SplitOptions) -> Result<Vec<BuildingMesh>, BuildingError> {
    let glb = glb::parse_glb(&payload.glb)?;
    let geo = glb.triangles(&opts.batch_attribute)?;
    let batch = geo.batch_ids.ok_or(BuildingError::MissingBatchId)?;
    let rtc = payload.rtc_center();

    let ids: BTreeSet<u32> = batch.iter().copied().collect();
    let mut slot: BTreeMap<u32, usize> = BTreeMap::new();
    let mut meshes: Vec<BuildingMesh> = Vec::with_capacity(ids.len());
    for &b in &ids {
        let source = payload.batch_value(&opts.id_column, b as usize);
        let mut m = BuildingMesh::new(source.unwrap_or_else(|| format!("batch-{b}")), Vec::new(), Vec::new());
        m.batch_id = b;
        for (name, col) in &payload.batch_table.json {
            if col.is_array() {
                if let Some(v) = payload.batch_value(name, b as usize) {
                    m.attributes.insert(name.clone(), v);
                }
            }
        }
        slot.insert(b, meshes.len());
        meshes.push(m);
    }
    let mut local = vec![0u32; geo.positions.len()];
    for (i, p) in geo.positions.iter().enumerate() {
        let m = &mut meshes[slot[&batch[i]]];
        local[i] = m.vertices.len() as u32;
        let z = y_up_to_z_up(*p);
        m.vertices.push([z[0] + rtc[0], z[1] + rtc[1], z[2] + rtc[2]]);
    }
    for (t, tri) in geo.indices.chunks_exact(3).enumerate() {
        let b = batch[tri[0] as usize];
        if tri.iter().any(|&i| batch[i as usize] != b) {
            return Err(BuildingError::InconsistentBatch { triangle: t });
        }
        meshes[slot[&b]].triangles.push([local[tri[0] as usize], local[tri[1] as usize], local[tri[2] as usize]]);
    }
    Ok(meshes)
}

/// Reference encoder: batches `meshes` into one GLB with a `_BATCHID`
/// attribute and wraps it with a batch table holding an `id` column plus the
/// meshes' attributes. Geometry is written y-up relative to `rtc_center`.
pub fn encode_b3dm(meshes: &[BuildingMesh], rtc_center: [f64; 3]) -> B3dmPayload {
    use serde_json::{json, Map, Value};
    let mut positions: Vec<[f32; 3]> = Vec::new();
    let mut batch: Vec<f32> = Vec::new();
    let mut indices: Vec<u32> = Vec::new();
    for (b, m) in meshes.iter().enumerate() {
        let base = positions.len() as u32;
        for v in &m.vertices {
            let rel = [v[0] - rtc_center[0], v[1] - rtc_center[1], v[2] - rtc_center[2]];
            positions.push(z_up_to_y_up(rel).map(|c| c as f32));
            batch.push(b as f32);
        }
        indices.extend(m.triangles.iter().flatten().map(|&i| i + base));
    }
    let mut builder = glb::GltfBuilder::new();
    let mesh = if positions.is_empty() {
        None
    } else {
        let pos = builder.push_vec3(&positions);
        let ids = builder.push_scalar(&batch);
        let idx = builder.push_indices(&indices);
        Some(builder.add_mesh("batched", &[("POSITION", pos), ("_BATCHID", ids)], Some(idx), None))
    };
    let roots: Vec<usize> = mesh.map(|m| builder.add_node(json!({"mesh": m}))).into_iter().collect();
    let glb = builder.finish(&roots, None);

    let mut ft = Map::new();
    ft.insert("BATCH_LENGTH".into(), json!(meshes.len()));
    ft.insert("RTC_CENTER".into(), json!(rtc_center));
    let mut bt = Map::new();
    bt.insert("id".into(), Value::Array(meshes.iter().map(|m| json!(m.id)).collect()));
    let columns: BTreeSet<&String> = meshes.iter().flat_map(|m| m.attributes.keys()).filter(|k| *k != "id").collect();
    for col in columns {
        let values = meshes.iter().map(|m| m.attributes.get(col).map_or(Value::Null, |v| json!(v))).collect();
        bt.insert(col.clone(), Value::Array(values));
    }
    B3dmPayload { feature_table: Table { json: ft, binary: vec![] }, batch_table: Table { json: bt, binary: vec![] }, glb }
}
