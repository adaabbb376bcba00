use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ObjectKind, SceneGraph};

pub const MANIFEST_VERSION: u32 = 1;
pub const CONVENTION: &str = "scene-local meters, right-handed, z up; the glb root node maps z-up to y-up";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestOrigin {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestBounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

/// Companion document of an exported scene. Field order is fixed by the
/// declaration order here; maps are sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub convention: String,
    pub origin: ManifestOrigin,
    pub bounds: ManifestBounds,
    pub seed: u64,
    pub object_count: usize,
    pub counts: BTreeMap<String, usize>,
    pub drops: BTreeMap<String, usize>,
    pub warnings: BTreeMap<String, usize>,
    /// Object ids per kind, in scene order.
    pub objects: BTreeMap<String, Vec<String>>,
    /// Generation parameters echoed by the caller.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub parameters: serde_json::Value,
}

impl Manifest {
    pub fn from_scene(scene: &SceneGraph) -> Self {
        let f = &scene.frame;
        let mut objects: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for o in &scene.objects {
            objects.entry(o.kind.name().to_string()).or_default().push(o.id.clone());
        }
        Manifest {
            manifest_version: MANIFEST_VERSION,
            convention: CONVENTION.to_string(),
            origin: ManifestOrigin { lat: f.origin.lat, lon: f.origin.lon },
            bounds: ManifestBounds { min_x: f.bounds.min.x, min_y: f.bounds.min.y, max_x: f.bounds.max.x, max_y: f.bounds.max.y },
            seed: f.seed,
            object_count: scene.objects.len(),
            counts: ObjectKind::ALL.iter().map(|&k| (k.name().to_string(), scene.count(k))).collect(),
            drops: scene.drops.clone(),
            warnings: scene.warnings.clone(),
            objects,
            parameters: serde_json::Value::Null,
        }
    }

    pub fn count(&self, kind: ObjectKind) -> usize {
        self.counts.get(kind.name()).copied().unwrap_or(0)
    }
}

impl Manifest {
    /// Pretty-printed JSON with a trailing newline.
    pub fn to_text(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }
}

pub fn export_manifest(scene: &SceneGraph) -> String {
    Manifest::from_scene(scene).to_text()
}
