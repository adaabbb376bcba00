//! Object-based scene graph, binary glTF export and manifest.

mod export;
mod manifest;
mod prototype;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::buildings::BuildingMesh;
use crate::geom::ClassCode;
use crate::geom::{GeoPoint, Rect};
use crate::hydro::WaterMesh;
use crate::landcover::WATER;
use crate::terrain::TerrainMesh;
use crate::util::seeded_index;
use crate::vegetation::TreeInstance;

pub use export::{export_glb, validate_glb, GlbSummary, NodeSummary, ROOT_NODE_NAME};
pub use manifest::{export_manifest, Manifest};
pub use prototype::{tree_prototype, TREE_PROTOTYPE_KEY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("layer frame {found} does not match scene frame {expected}")]
    FrameMismatch { expected: String, found: String },
    #[error("serialization failed: {0}")]
    Serialization(String),
    #[error("invalid scene: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectKind {
    Terrain,
    Water,
    Building,
    Tree,
    VehicleTrack,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 5] =
        [ObjectKind::Terrain, ObjectKind::Water, ObjectKind::Building, ObjectKind::Tree, ObjectKind::VehicleTrack];

    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::Terrain => "terrain",
            ObjectKind::Water => "water",
            ObjectKind::Building => "building",
            ObjectKind::Tree => "tree",
            ObjectKind::VehicleTrack => "vehicle-track",
        }
    }
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub translation: [f64; 3],
    /// Radians, counter-clockwise about +z.
    pub rotation_about_up: f64,
    pub scale: f64,
}

impl Default for Transform {
    fn default() -> Self {
        Transform { translation: [0.0; 3], rotation_about_up: 0.0, scale: 1.0 }
    }
}

impl Transform {
    pub fn is_identity(&self) -> bool {
        *self == Transform::default()
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite()) && self.rotation_about_up.is_finite() && self.scale.is_finite() && self.scale > 0.0
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.rotation_about_up.sin_cos();
        let [x, y, z] = p.map(|v| v * self.scale);
        [c * x - s * y + self.translation[0], s * x + c * y + self.translation[1], z + self.translation[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeshMode {
    Triangles,
    LineStrip,
}

/// Geometry owned by one object, in scene meters (z up).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshData {
    pub mode: MeshMode,
    pub positions: Vec<[f64; 3]>,
    /// Triangle corners, or the strip order for line strips.
    pub indices: Vec<u32>,
    pub uvs: Option<Vec<[f64; 2]>>,
    /// Per-vertex land cover class.
    pub classes: Option<Vec<ClassCode>>,
    pub color: [u8; 3],
}

impl MeshData {
    pub fn triangles(positions: Vec<[f64; 3]>, triangles: &[[u32; 3]], color: [u8; 3]) -> Self {
        MeshData {
            mode: MeshMode::Triangles,
            positions,
            indices: triangles.iter().flatten().copied().collect(),
            uvs: None,
            classes: None,
            color,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    /// Hex prefix of a sha256 over the geometry; names unnamed entities.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.positions {
            for v in p {
                h.update(v.to_le_bytes());
            }
        }
        for i in &self.indices {
            h.update(i.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GeometryRef {
    /// Index into [`SceneGraph::meshes`].
    Mesh(usize),
    /// Key of a shared prototype mesh.
    Instance(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub kind: ObjectKind,
    pub source_id: String,
    pub class_code: Option<ClassCode>,
    pub geometry: GeometryRef,
    pub transform: Transform,
    pub metadata: BTreeMap<String, String>,
}

/// Georeference and seed shared by every layer of one generation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneFrame {
    pub origin: GeoPoint,
    pub bounds: Rect,
    pub seed: u64,
}

/// Route polyline for the vehicle-track layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackLine {
    pub id: String,
    pub points: Vec<[f64; 3]>,
}

/// Output of one or more generation stages, tagged with the frame origin it
/// was produced in.
#[derive(Debug, Clone, Default)]
pub struct SceneLayers {
    pub origin: Option<GeoPoint>,
    pub terrain: Option<TerrainMesh>,
    pub water: Vec<WaterMesh>,
    pub buildings: Vec<BuildingMesh>,
    pub trees: Vec<TreeInstance>,
    pub tracks: Vec<TrackLine>,
    /// Entities dropped by the producing stage, by reason.
    pub drops: BTreeMap<String, usize>,
}

impl SceneLayers {
    pub fn new(origin: GeoPoint) -> Self {
        SceneLayers { origin: Some(origin), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub frame: SceneFrame,
    pub objects: Vec<SceneObject>,
    pub meshes: Vec<MeshData>,
    pub prototypes: BTreeMap<String, MeshData>,
    pub drops: BTreeMap<String, usize>,
    pub warnings: BTreeMap<String, usize>,
}

pub const TERRAIN_COLOR: [u8; 3] = [110, 140, 80];
pub const WATER_COLOR: [u8; 3] = [60, 110, 170];
pub const TRACK_COLOR: [u8; 3] = [220, 40, 40];

fn origin_label(g: &GeoPoint) -> String {
    format!("({:.7}, {:.7})", g.lat, g.lon)
}

struct IdRegistry {
    used: BTreeSet<String>,
    collisions: usize,
}

impl IdRegistry {
    /// Unique id; repeats get `~2`, `~3`, ... in encounter order.
    fn claim(&mut self, base: String) -> String {
        if self.used.insert(base.clone()) {
            return base;
        }
        self.collisions += 1;
        let mut k = 2;
        loop {
            let candidate = format!("{base}~{k}");
            if self.used.insert(candidate.clone()) {
                log::warn!("duplicate object id {base}; renamed to {candidate}");
                return candidate;
            }
            k += 1;
        }
    }
}

/// Builds the scene graph with one object per input entity.
pub fn assemble(frame: SceneFrame, layers: &[SceneLayers]) -> Result<SceneGraph, SceneError> {
    for l in layers {
        if let Some(o) = &l.origin {
            if o != &frame.origin {
                return Err(SceneError::FrameMismatch { expected: origin_label(&frame.origin), found: origin_label(o) });
            }
        }
    }
    let mut scene = SceneGraph {
        frame,
        objects: Vec::new(),
        meshes: Vec::new(),
        prototypes: BTreeMap::new(),
        drops: BTreeMap::new(),
        warnings: BTreeMap::new(),
    };
    let mut ids = IdRegistry { used: BTreeSet::new(), collisions: 0 };
    for l in layers {
        for (reason, n) in &l.drops {
            *scene.drops.entry(reason.clone()).or_default() += n;
        }
    }
    let push_mesh =
        |scene: &mut SceneGraph, ids: &mut IdRegistry, kind: ObjectKind, source: String, class_code, mesh: MeshData, metadata| {
            if mesh.positions.is_empty() || mesh.indices.is_empty() {
                *scene.drops.entry(format!("{kind}_empty_geometry")).or_default() += 1;
                return;
            }
            let source = if source.is_empty() { mesh.content_hash() } else { source };
            let id = ids.claim(format!("{kind}/{source}"));
            scene.meshes.push(mesh);
            scene.objects.push(SceneObject {
                id,
                kind,
                source_id: source,
                class_code,
                geometry: GeometryRef::Mesh(scene.meshes.len() - 1),
                transform: Transform::default(),
                metadata,
            });
        };

    for (n, t) in layers.iter().filter_map(|l| l.terrain.as_ref()).enumerate() {
        let mut mesh = MeshData::triangles(t.vertices.clone(), &t.triangles, TERRAIN_COLOR);
        mesh.classes = Some(t.classes.clone());
        let source = if n == 0 { "tile".to_string() } else { format!("tile-{n}") };
        push_mesh(&mut scene, &mut ids, ObjectKind::Terrain, source, None, mesh, BTreeMap::new());
    }
    for w in layers.iter().flat_map(|l| &l.water) {
        let mesh = MeshData::triangles(w.vertices.clone(), &w.triangles, WATER_COLOR);
        let mut meta = BTreeMap::new();
        if let Some(z) = w.vertices.first().map(|v| v[2]) {
            meta.insert("surface_elevation".to_string(), format!("{z:.3}"));
        }
        push_mesh(&mut scene, &mut ids, ObjectKind::Water, format!("body-{}", w.body_id), Some(WATER), mesh, meta);
    }
    for b in layers.iter().flat_map(|l| &l.buildings) {
        let mut mesh = MeshData::triangles(b.vertices.clone(), &b.triangles, b.roof_color);
        if b.uvs.len() == b.vertices.len() && !b.uvs.is_empty() {
            mesh.uvs = Some(b.uvs.clone());
        }
        let mut meta = b.attributes.clone();
        meta.insert("roof_color".to_string(), hex::encode(b.roof_color));
        if let Some(k) = &b.texture_key {
            meta.insert("texture_key".to_string(), k.clone());
        }
        push_mesh(&mut scene, &mut ids, ObjectKind::Building, b.id.clone(), None, mesh, meta);
    }
    let trees: Vec<&TreeInstance> = layers.iter().flat_map(|l| &l.trees).collect();
    if !trees.is_empty() {
        scene.prototypes.insert(TREE_PROTOTYPE_KEY.to_string(), tree_prototype());
    }
    for t in trees {
        let id = ids.claim(format!("tree/{}", t.source_id));
        let mut meta = BTreeMap::new();
        meta.insert("size_class".to_string(), t.size_class.to_string());
        meta.insert("crown_radius".to_string(), format!("{:.3}", t.crown_radius));
        if let Some(k) = &t.model_key {
            meta.insert("model_key".to_string(), k.clone());
        }
        if let Some(s) = &t.species {
            meta.insert("species".to_string(), s.clone());
        }
        let heading = seeded_index(frame.seed, &t.source_id, 360) as f64;
        scene.objects.push(SceneObject {
            id,
            kind: ObjectKind::Tree,
            source_id: t.source_id.clone(),
            class_code: None,
            geometry: GeometryRef::Instance(TREE_PROTOTYPE_KEY.to_string()),
            transform: Transform {
                translation: [t.position.x, t.position.y, t.elevation.unwrap_or(0.0)],
                rotation_about_up: heading.to_radians(),
                scale: t.crown_radius,
            },
            metadata: meta,
        });
    }
    for track in layers.iter().flat_map(|l| &l.tracks) {
        let mesh = MeshData {
            mode: MeshMode::LineStrip,
            positions: track.points.clone(),
            indices: (0..track.points.len() as u32).collect(),
            uvs: None,
            classes: None,
            color: TRACK_COLOR,
        };
        push_mesh(&mut scene, &mut ids, ObjectKind::VehicleTrack, track.id.clone(), None, mesh, BTreeMap::new());
    }
    if ids.collisions > 0 {
        scene.warnings.insert("duplicate_id".to_string(), ids.collisions);
    }
    Ok(scene)
}

impl SceneGraph {
    pub fn count(&self, kind: ObjectKind) -> usize {
        self.objects.iter().filter(|o| o.kind == kind).count()
    }

    pub fn geometry(&self, object: &SceneObject) -> Option<&MeshData> {
        match &object.geometry {
            GeometryRef::Mesh(i) => self.meshes.get(*i),
            GeometryRef::Instance(k) => self.prototypes.get(k),
        }
    }

    /// Checks id uniqueness, finite transforms, geometry resolution and that
    /// footprints stay within the bounds grown by `eps`.
    pub fn validate(&self, eps: f64) -> Result<(), SceneError> {
        let mut seen = BTreeSet::new();
        let grown = self.frame.bounds.expand(eps);
        for o in &self.objects {
            if !seen.insert(&o.id) {
                return Err(SceneError::Invalid(format!("duplicate id {}", o.id)));
            }
            if !o.transform.is_finite() {
                return Err(SceneError::Invalid(format!("{} has a non-finite transform", o.id)));
            }
            let mesh = self.geometry(o).ok_or_else(|| SceneError::Invalid(format!("{} has no geometry", o.id)))?;
            if mesh.indices.iter().any(|&i| i as usize >= mesh.positions.len()) {
                return Err(SceneError::Invalid(format!("{} indexes past its vertices", o.id)));
            }
            let anchor = o.transform.apply([0.0; 3]);
            let outside = match o.geometry {
                GeometryRef::Instance(_) => !grown.contains(crate::geom::Point2D::new(anchor[0], anchor[1])),
                GeometryRef::Mesh(_) => mesh.positions.iter().any(|&p| {
                    let q = o.transform.apply(p);
                    !grown.contains(crate::geom::Point2D::new(q[0], q[1]))
                }),
            };
            if outside {
                return Err(SceneError::Invalid(format!("{} lies outside the scene bounds", o.id)));
            }
        }
        Ok(())
    }
}
