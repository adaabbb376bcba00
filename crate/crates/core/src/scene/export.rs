use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Map, Value};

use super::{GeometryRef, MeshData, MeshMode, ObjectKind, SceneError, SceneGraph};
use crate::buildings::glb::{parse_glb, Glb, GltfBuilder, MODE_LINE_STRIP, MODE_TRIANGLES};
use crate::geom::ClassCode;

/// Column-major matrix taking the scene's z-up frame to glTF's y-up frame:
/// (x, y, z) -> (x, z, -y).
const Z_UP_TO_Y_UP: [f64; 16] = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
pub const ROOT_NODE_NAME: &str = "scene";

fn rgba(c: [u8; 3]) -> [f64; 4] {
    [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0, 1.0]
}

struct Writer {
    b: GltfBuilder,
    materials: BTreeMap<[u8; 3], usize>,
}

impl Writer {
    fn material(&mut self, color: [u8; 3]) -> usize {
        let b = &mut self.b;
        *self.materials.entry(color).or_insert_with(|| b.add_material(&format!("#{}", hex::encode(color)), rgba(color)))
    }

    fn mesh(&mut self, name: &str, m: &MeshData) -> usize {
        let pos: Vec<[f32; 3]> = m.positions.iter().map(|p| p.map(|v| v as f32)).collect();
        let mut attrs = vec![("POSITION", self.b.push_vec3(&pos))];
        if let Some(uv) = &m.uvs {
            let uv: Vec<[f32; 2]> = uv.iter().map(|t| t.map(|v| v as f32)).collect();
            attrs.push(("TEXCOORD_0", self.b.push_vec2(&uv)));
        }
        if let Some(classes) = &m.classes {
            let c: Vec<f32> = classes.iter().map(|&c| c as f32).collect();
            attrs.push(("_CLASS", self.b.push_scalar(&c)));
        }
        let indices = self.b.push_indices(&m.indices);
        let material = self.material(m.color);
        let mode = match m.mode {
            MeshMode::Triangles => MODE_TRIANGLES,
            MeshMode::LineStrip => MODE_LINE_STRIP,
        };
        self.b.add_mesh_with_mode(name, &attrs, Some(indices), Some(material), mode)
    }
}

/// Binary glTF with one node per scene object under a root node that turns
/// the z-up scene into glTF's y-up convention. Trees reference one shared
/// prototype mesh. Output depends only on the scene contents.
pub fn export_glb(scene: &SceneGraph) -> Result<Vec<u8>, SceneError> {
    scene.validate(f64::INFINITY)?;
    let mut w = Writer { b: GltfBuilder::new(), materials: BTreeMap::new() };
    let mut prototype_mesh = BTreeMap::new();
    let mut children = Vec::with_capacity(scene.objects.len());
    for o in &scene.objects {
        let mesh = match &o.geometry {
            GeometryRef::Mesh(i) => w.mesh(&o.id, &scene.meshes[*i]),
            GeometryRef::Instance(key) => match prototype_mesh.get(key) {
                Some(&m) => m,
                None => {
                    let m = w.mesh(key, &scene.prototypes[key]);
                    prototype_mesh.insert(key.clone(), m);
                    m
                }
            },
        };
        let mut extras = Map::new();
        extras.insert("kind".into(), json!(o.kind.name()));
        extras.insert("source_id".into(), json!(o.source_id));
        extras.insert("class_code".into(), o.class_code.map_or(Value::Null, |c| json!(c)));
        if !o.metadata.is_empty() {
            extras.insert("attributes".into(), json!(o.metadata));
        }
        let mut node = json!({"name": o.id, "mesh": mesh, "extras": extras});
        let t = &o.transform;
        if t.translation != [0.0; 3] {
            node["translation"] = json!(t.translation);
        }
        if t.rotation_about_up != 0.0 {
            let h = t.rotation_about_up / 2.0;
            node["rotation"] = json!([0.0, 0.0, h.sin(), h.cos()]);
        }
        if t.scale != 1.0 {
            node["scale"] = json!([t.scale, t.scale, t.scale]);
        }
        children.push(w.b.add_node(node));
    }
    let mut root = json!({"name": ROOT_NODE_NAME, "matrix": Z_UP_TO_Y_UP});
    if !children.is_empty() {
        root["children"] = json!(children);
    }
    let root = w.b.add_node(root);
    let f = &scene.frame;
    let asset = json!({
        "origin": {"lat": f.origin.lat, "lon": f.origin.lon},
        "bounds": [f.bounds.min.x, f.bounds.min.y, f.bounds.max.x, f.bounds.max.y],
        "seed": f.seed,
        "units": "meters",
        "up": "z in scene, y in file via root node matrix",
    });
    Ok(w.b.finish(&[root], Some(asset)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSummary {
    pub name: String,
    pub kind: Option<ObjectKind>,
    pub source_id: Option<String>,
    pub class_code: Option<ClassCode>,
    pub attributes: BTreeMap<String, String>,
    pub mesh: usize,
    pub vertex_count: usize,
}

/// What a conforming scene file contains, as read back from its bytes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GlbSummary {
    pub mesh_count: usize,
    pub objects: Vec<NodeSummary>,
}

impl GlbSummary {
    pub fn count(&self, kind: ObjectKind) -> usize {
        self.objects.iter().filter(|o| o.kind == Some(kind)).count()
    }
}

fn invalid(msg: impl Into<String>) -> SceneError {
    SceneError::Invalid(msg.into())
}

fn items<'a>(doc: &'a Value, key: &str) -> &'a [Value] {
    doc.get(key).and_then(Value::as_array).map_or(&[], Vec::as_slice)
}

fn index_field(v: &Value, key: &str, limit: usize, what: &str) -> Result<Option<usize>, SceneError> {
    match v.get(key) {
        None => Ok(None),
        Some(x) => {
            let i = x.as_u64().ok_or_else(|| invalid(format!("{what}.{key} is not an index")))? as usize;
            if i >= limit {
                return Err(invalid(format!("{what}.{key} = {i} out of range ({limit})")));
            }
            Ok(Some(i))
        }
    }
}

fn component_size(ctype: u64) -> Option<usize> {
    match ctype {
        5120 | 5121 => Some(1),
        5122 | 5123 => Some(2),
        5125 | 5126 => Some(4),
        _ => None,
    }
}

fn type_width(t: &str) -> Option<usize> {
    Some(match t {
        "SCALAR" => 1,
        "VEC2" => 2,
        "VEC3" => 3,
        "VEC4" | "MAT2" => 4,
        "MAT3" => 9,
        "MAT4" => 16,
        _ => return None,
    })
}

fn check_structure(bytes: &[u8], glb: &Glb) -> Result<(), SceneError> {
    if bytes.get(16..20) != Some(b"JSON".as_slice()) {
        return Err(invalid("first chunk is not JSON"));
    }
    let doc = &glb.json;
    if doc.pointer("/asset/version").and_then(Value::as_str) != Some("2.0") {
        return Err(invalid("asset.version must be \"2.0\""));
    }
    let buffers = items(doc, "buffers");
    if buffers.len() > 1 {
        return Err(invalid("more than one buffer"));
    }
    let buffer_len = match buffers.first() {
        Some(b) => {
            if b.get("uri").is_some() {
                return Err(invalid("external buffer"));
            }
            let n = b.get("byteLength").and_then(Value::as_u64).ok_or_else(|| invalid("buffer without byteLength"))? as usize;
            if n > glb.bin.len() {
                return Err(invalid("buffer longer than BIN chunk"));
            }
            n
        }
        None => 0,
    };
    let views = items(doc, "bufferViews");
    for (i, v) in views.iter().enumerate() {
        let what = format!("bufferViews[{i}]");
        if index_field(v, "buffer", buffers.len(), &what)?.is_none() {
            return Err(invalid(format!("{what} has no buffer")));
        }
        let off = v.get("byteOffset").and_then(Value::as_u64).unwrap_or(0) as usize;
        let len = v.get("byteLength").and_then(Value::as_u64).ok_or_else(|| invalid(format!("{what} has no byteLength")))? as usize;
        if off + len > buffer_len {
            return Err(invalid(format!("{what} exceeds the buffer")));
        }
    }
    let accessors = items(doc, "accessors");
    let mut counts = Vec::with_capacity(accessors.len());
    for (i, a) in accessors.iter().enumerate() {
        let what = format!("accessors[{i}]");
        let view = index_field(a, "bufferView", views.len(), &what)?.ok_or_else(|| invalid(format!("{what} has no bufferView")))?;
        let csize = a.get("componentType").and_then(Value::as_u64).and_then(component_size);
        let width = a.get("type").and_then(Value::as_str).and_then(type_width);
        let (Some(csize), Some(width)) = (csize, width) else {
            return Err(invalid(format!("{what} has an invalid componentType or type")));
        };
        let count = a.get("count").and_then(Value::as_u64).filter(|&c| c > 0).ok_or_else(|| invalid(format!("{what} needs count ≥ 1")))?;
        let off = a.get("byteOffset").and_then(Value::as_u64).unwrap_or(0) as usize;
        let stride = views[view].get("byteStride").and_then(Value::as_u64).map_or(csize * width, |s| s as usize);
        let view_len = views[view]["byteLength"].as_u64().unwrap_or(0) as usize;
        if off + stride * (count as usize - 1) + csize * width > view_len {
            return Err(invalid(format!("{what} exceeds its bufferView")));
        }
        counts.push(count as usize);
    }
    let materials = items(doc, "materials");
    let meshes = items(doc, "meshes");
    for (m, mesh) in meshes.iter().enumerate() {
        let prims = items(mesh, "primitives");
        if prims.is_empty() {
            return Err(invalid(format!("meshes[{m}] has no primitives")));
        }
        for (p, prim) in prims.iter().enumerate() {
            let what = format!("meshes[{m}].primitives[{p}]");
            let attrs = prim.get("attributes").and_then(Value::as_object).ok_or_else(|| invalid(format!("{what} has no attributes")))?;
            let pos = attrs.get("POSITION").and_then(Value::as_u64).ok_or_else(|| invalid(format!("{what} has no POSITION")))? as usize;
            let vertices = *counts.get(pos).ok_or_else(|| invalid(format!("{what} POSITION out of range")))?;
            let acc = &accessors[pos];
            if acc.get("min").is_none() || acc.get("max").is_none() {
                return Err(invalid(format!("{what} POSITION lacks min/max")));
            }
            for (name, idx) in attrs {
                let i = idx.as_u64().ok_or_else(|| invalid(format!("{what}.{name} is not an index")))? as usize;
                if counts.get(i) != Some(&vertices) {
                    return Err(invalid(format!("{what}.{name} count differs from POSITION")));
                }
            }
            if let Some(i) = index_field(prim, "indices", accessors.len(), &what)? {
                let values = glb.read_accessor(i).map_err(|e| invalid(e.to_string()))?;
                if values.iter().any(|v| v[0] as usize >= vertices) {
                    return Err(invalid(format!("{what} index out of range")));
                }
            }
            index_field(prim, "material", materials.len(), &what)?;
            if prim.get("mode").and_then(Value::as_u64).unwrap_or(4) > 6 {
                return Err(invalid(format!("{what} has an invalid mode")));
            }
        }
    }
    let nodes = items(doc, "nodes");
    let mut parent = vec![None; nodes.len()];
    for (n, node) in nodes.iter().enumerate() {
        let what = format!("nodes[{n}]");
        index_field(node, "mesh", meshes.len(), &what)?;
        if node.get("matrix").is_some() && ["translation", "rotation", "scale"].iter().any(|k| node.get(k).is_some()) {
            return Err(invalid(format!("{what} mixes matrix and TRS")));
        }
        for c in items(node, "children") {
            let c =
                c.as_u64().map(|c| c as usize).filter(|&c| c < nodes.len()).ok_or_else(|| invalid(format!("{what} has a bad child")))?;
            if c == n || parent[c].replace(n).is_some() {
                return Err(invalid(format!("node {c} has more than one parent")));
            }
        }
    }
    for start in 0..nodes.len() {
        let (mut at, mut steps) = (start, 0);
        while let Some(p) = parent[at] {
            at = p;
            steps += 1;
            if steps > nodes.len() {
                return Err(invalid("node hierarchy has a cycle"));
            }
        }
    }
    let scenes = items(doc, "scenes");
    index_field(doc, "scene", scenes.len(), "document")?;
    for s in scenes {
        for r in items(s, "nodes") {
            let r = r.as_u64().map(|r| r as usize).filter(|&r| r < nodes.len()).ok_or_else(|| invalid("scene root out of range"))?;
            if parent[r].is_some() {
                return Err(invalid(format!("scene root {r} is also a child")));
            }
        }
    }
    Ok(())
}

/// Conformance check of a scene file followed by a read-back of its object
/// nodes (the children of the root node).
pub fn validate_glb(bytes: &[u8]) -> Result<GlbSummary, SceneError> {
    let glb = parse_glb(bytes).map_err(|e| invalid(e.to_string()))?;
    check_structure(bytes, &glb)?;
    let doc = &glb.json;
    let nodes = items(doc, "nodes");
    let roots = doc.pointer("/scenes/0/nodes").and_then(Value::as_array).cloned().unwrap_or_default();
    let root = roots.first().and_then(Value::as_u64).ok_or_else(|| invalid("scene has no root node"))? as usize;
    let mut summary = GlbSummary { mesh_count: items(doc, "meshes").len(), objects: Vec::new() };
    let mut names = BTreeSet::new();
    for c in items(&nodes[root], "children") {
        let node = &nodes[c.as_u64().expect("checked") as usize];
        let name = node.get("name").and_then(Value::as_str).unwrap_or_default().to_string();
        if !names.insert(name.clone()) {
            return Err(invalid(format!("duplicate node name {name}")));
        }
        let mesh = node.get("mesh").and_then(Value::as_u64).ok_or_else(|| invalid(format!("node {name} has no mesh")))? as usize;
        let pos = doc["meshes"][mesh]["primitives"][0]["attributes"]["POSITION"].as_u64().expect("checked") as usize;
        let extras = node.get("extras");
        let text = |k: &str| extras.and_then(|e| e.get(k)).and_then(Value::as_str).map(str::to_string);
        let kind = text("kind").and_then(|k| ObjectKind::ALL.into_iter().find(|o| o.name() == k));
        summary.objects.push(NodeSummary {
            name,
            kind,
            source_id: text("source_id"),
            class_code: extras.and_then(|e| e.get("class_code")).and_then(Value::as_u64).map(|c| c as ClassCode),
            attributes: extras
                .and_then(|e| e.get("attributes"))
                .and_then(Value::as_object)
                .map(|m| m.iter().map(|(k, v)| (k.clone(), v.as_str().unwrap_or_default().to_string())).collect())
                .unwrap_or_default(),
            mesh,
            vertex_count: doc["accessors"][pos]["count"].as_u64().expect("checked") as usize,
        });
    }
    Ok(summary)
}
