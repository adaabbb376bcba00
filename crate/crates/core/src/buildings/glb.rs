//! Binary glTF 2.0 container: chunk framing, a minimal accessor reader for
//! triangle geometry and a deterministic builder.

use serde_json::{json, Map, Value};

use super::BuildingError;

const GLB_MAGIC: &[u8; 4] = b"glTF";
const CHUNK_JSON: u32 = 0x4E4F_534A;
const CHUNK_BIN: u32 = 0x004E_4942;

pub const FLOAT: u32 = 5126;
pub const UNSIGNED_BYTE: u32 = 5121;
pub const UNSIGNED_SHORT: u32 = 5123;
pub const UNSIGNED_INT: u32 = 5125;
pub const MODE_LINE_STRIP: u32 = 3;
pub const MODE_TRIANGLES: u32 = 4;
const ARRAY_BUFFER: u32 = 34962;
const ELEMENT_ARRAY_BUFFER: u32 = 34963;

#[derive(Debug, Clone, PartialEq)]
pub struct Glb {
    pub json: Value,
    pub bin: Vec<u8>,
}

fn read_u32(b: &[u8], at: usize) -> Result<u32, BuildingError> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes(s.try_into().expect("four bytes")))
        .ok_or_else(|| BuildingError::Glb(format!("truncated at byte {at}")))
}

pub fn parse_glb(bytes: &[u8]) -> Result<Glb, BuildingError> {
    if bytes.get(..4) != Some(GLB_MAGIC.as_slice()) {
        return Err(BuildingError::Glb("missing glTF magic".into()));
    }
    let version = read_u32(bytes, 4)?;
    if version != 2 {
        return Err(BuildingError::Glb(format!("unsupported glTF version {version}")));
    }
    let total = read_u32(bytes, 8)? as usize;
    if total != bytes.len() {
        return Err(BuildingError::Glb(format!("length field {total} but {} bytes", bytes.len())));
    }
    let mut at = 12;
    let mut json = None;
    let mut bin = Vec::new();
    while at < total {
        let len = read_u32(bytes, at)? as usize;
        let kind = read_u32(bytes, at + 4)?;
        let body = bytes.get(at + 8..at + 8 + len).ok_or_else(|| BuildingError::Glb("chunk overruns container".into()))?;
        match kind {
            CHUNK_JSON if json.is_none() => {
                json = Some(serde_json::from_slice(body).map_err(|e| BuildingError::Glb(format!("json chunk: {e}")))?);
            }
            CHUNK_BIN if bin.is_empty() => bin = body.to_vec(),
            _ => {}
        }
        at += 8 + len;
    }
    let json = json.ok_or_else(|| BuildingError::Glb("no JSON chunk".into()))?;
    Ok(Glb { json, bin })
}

/// Frames a JSON document and binary buffer as GLB. The JSON chunk is padded
/// with spaces and the binary chunk with zeros to 4-byte boundaries.
pub fn write_glb(json: &Value, bin: &[u8]) -> Vec<u8> {
    let mut text = serde_json::to_vec(json).expect("json values serialize");
    while text.len() % 4 != 0 {
        text.push(b' ');
    }
    let mut body = bin.to_vec();
    while body.len() % 4 != 0 {
        body.push(0);
    }
    let total = 12 + 8 + text.len() + if body.is_empty() { 0 } else { 8 + body.len() };
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(GLB_MAGIC);
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHUNK_JSON.to_le_bytes());
    out.extend_from_slice(&text);
    if !body.is_empty() {
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&CHUNK_BIN.to_le_bytes());
        out.extend_from_slice(&body);
    }
    out
}

/// Triangle soup gathered from every mesh instance in the default scene,
/// with node transforms applied. Coordinates stay in the glTF frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleGeometry {
    pub positions: Vec<[f64; 3]>,
    pub batch_ids: Option<Vec<u32>>,
    pub indices: Vec<u32>,
}

impl Glb {
    fn array(&self, key: &str) -> &[Value] {
        self.json.get(key).and_then(Value::as_array).map_or(&[], Vec::as_slice)
    }

    /// Rejects content the reader cannot represent faithfully.
    pub fn check_supported(&self) -> Result<(), BuildingError> {
        if let Some(req) = self.json.get("extensionsRequired").and_then(Value::as_array) {
            if let Some(ext) = req.first() {
                return Err(BuildingError::UnsupportedFeature(format!("required extension {ext}")));
            }
        }
        if !self.array("animations").is_empty() {
            return Err(BuildingError::UnsupportedFeature("animations".into()));
        }
        if let Some(b) = self.array("buffers").first() {
            if b.get("uri").is_some() {
                return Err(BuildingError::UnsupportedFeature("external buffer".into()));
            }
        }
        Ok(())
    }

    /// Reads accessor `index` as `f64` tuples of its component count.
    pub fn read_accessor(&self, index: usize) -> Result<Vec<Vec<f64>>, BuildingError> {
        let bad = |m: &str| BuildingError::Glb(format!("accessor {index}: {m}"));
        let acc = self.array("accessors").get(index).ok_or_else(|| bad("missing"))?;
        let count = acc.get("count").and_then(Value::as_u64).ok_or_else(|| bad("no count"))? as usize;
        let ctype = acc.get("componentType").and_then(Value::as_u64).ok_or_else(|| bad("no componentType"))? as u32;
        let width = match acc.get("type").and_then(Value::as_str) {
            Some("SCALAR") => 1,
            Some("VEC2") => 2,
            Some("VEC3") => 3,
            Some("VEC4") => 4,
            other => return Err(bad(&format!("unsupported type {other:?}"))),
        };
        let csize = match ctype {
            FLOAT | UNSIGNED_INT => 4,
            UNSIGNED_SHORT => 2,
            UNSIGNED_BYTE => 1,
            other => return Err(bad(&format!("unsupported component type {other}"))),
        };
        if acc.get("sparse").is_some() {
            return Err(BuildingError::UnsupportedFeature("sparse accessor".into()));
        }
        let view_idx = acc.get("bufferView").and_then(Value::as_u64).ok_or_else(|| bad("no bufferView"))? as usize;
        let view = self.array("bufferViews").get(view_idx).ok_or_else(|| bad("bufferView missing"))?;
        let view_off = view.get("byteOffset").and_then(Value::as_u64).unwrap_or(0) as usize;
        let view_len = view.get("byteLength").and_then(Value::as_u64).ok_or_else(|| bad("view without length"))? as usize;
        let stride = view.get("byteStride").and_then(Value::as_u64).map_or(width * csize, |s| s as usize);
        let acc_off = acc.get("byteOffset").and_then(Value::as_u64).unwrap_or(0) as usize;
        let data = self.bin.get(view_off..view_off + view_len).ok_or_else(|| bad("view outside buffer"))?;
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let base = acc_off + i * stride;
            let mut item = Vec::with_capacity(width);
            for k in 0..width {
                let at = base + k * csize;
                let raw = data.get(at..at + csize).ok_or_else(|| bad("element outside view"))?;
                item.push(match ctype {
                    FLOAT => f32::from_le_bytes(raw.try_into().expect("4 bytes")) as f64,
                    UNSIGNED_INT => u32::from_le_bytes(raw.try_into().expect("4 bytes")) as f64,
                    UNSIGNED_SHORT => u16::from_le_bytes(raw.try_into().expect("2 bytes")) as f64,
                    _ => raw[0] as f64,
                });
            }
            out.push(item);
        }
        Ok(out)
    }

    /// Flattens all triangle primitives reachable from the scene roots.
    pub fn triangles(&self, batch_attribute: &str) -> Result<TriangleGeometry, BuildingError> {
        self.check_supported()?;
        let mut geo = TriangleGeometry::default();
        let mut batch: Vec<u32> = Vec::new();
        let mut all_have_batch = true;
        let scene = self.json.get("scene").and_then(Value::as_u64).unwrap_or(0) as usize;
        let roots: Vec<usize> = match self.array("scenes").get(scene) {
            Some(s) => s
                .get("nodes")
                .and_then(Value::as_array)
                .map_or(vec![], |a| a.iter().filter_map(Value::as_u64).map(|v| v as usize).collect()),
            // No scene: every mesh drawn once with identity transform.
            None => vec![],
        };
        let mut instances: Vec<(usize, [f64; 16])> = Vec::new();
        if roots.is_empty() && self.array("scenes").is_empty() {
            instances.extend((0..self.array("meshes").len()).map(|m| (m, IDENTITY)));
        }
        let mut stack: Vec<(usize, [f64; 16], usize)> = roots.into_iter().map(|n| (n, IDENTITY, 0)).collect();
        while let Some((n, parent, depth)) = stack.pop() {
            if depth > 64 {
                return Err(BuildingError::Glb("node hierarchy too deep or cyclic".into()));
            }
            let node = self.array("nodes").get(n).ok_or_else(|| BuildingError::Glb(format!("node {n} missing")))?;
            let world = mat_mul(&parent, &node_matrix(node));
            if let Some(m) = node.get("mesh").and_then(Value::as_u64) {
                instances.push((m as usize, world));
            }
            if let Some(children) = node.get("children").and_then(Value::as_array) {
                for c in children.iter().rev().filter_map(Value::as_u64) {
                    stack.push((c as usize, world, depth + 1));
                }
            }
        }
        for (m, world) in instances {
            let mesh = self.array("meshes").get(m).ok_or_else(|| BuildingError::Glb(format!("mesh {m} missing")))?;
            for prim in mesh.get("primitives").and_then(Value::as_array).map_or(&[][..], Vec::as_slice) {
                let mode = prim.get("mode").and_then(Value::as_u64).unwrap_or(4);
                if mode != 4 {
                    return Err(BuildingError::UnsupportedFeature(format!("primitive mode {mode}")));
                }
                let attrs = prim.get("attributes").ok_or_else(|| BuildingError::Glb("primitive without attributes".into()))?;
                let pos_idx =
                    attrs.get("POSITION").and_then(Value::as_u64).ok_or_else(|| BuildingError::Glb("primitive without POSITION".into()))?;
                let positions = self.read_accessor(pos_idx as usize)?;
                let base = geo.positions.len() as u32;
                for p in &positions {
                    geo.positions.push(transform_point(&world, [p[0], p[1], p[2]]));
                }
                match attrs.get(batch_attribute).and_then(Value::as_u64) {
                    Some(b) => {
                        let ids = self.read_accessor(b as usize)?;
                        if ids.len() != positions.len() {
                            return Err(BuildingError::Glb("batch id count differs from vertex count".into()));
                        }
                        batch.extend(ids.iter().map(|v| v[0].round() as u32));
                    }
                    None => all_have_batch = false,
                }
                match prim.get("indices").and_then(Value::as_u64) {
                    Some(i) => {
                        for v in self.read_accessor(i as usize)? {
                            let idx = v[0] as u32;
                            if idx as usize >= positions.len() {
                                return Err(BuildingError::Glb(format!("index {idx} out of range")));
                            }
                            geo.indices.push(base + idx);
                        }
                    }
                    None => geo.indices.extend(base..base + positions.len() as u32),
                }
            }
        }
        if geo.indices.len() % 3 != 0 {
            return Err(BuildingError::Glb("index count is not a multiple of 3".into()));
        }
        geo.batch_ids = (all_have_batch && !geo.positions.is_empty()).then_some(batch);
        Ok(geo)
    }
}

const IDENTITY: [f64; 16] = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];

/// Column-major product `a * b`.
fn mat_mul(a: &[f64; 16], b: &[f64; 16]) -> [f64; 16] {
    let mut out = [0.0; 16];
    for c in 0..4 {
        for r in 0..4 {
            out[c * 4 + r] = (0..4).map(|k| a[k * 4 + r] * b[c * 4 + k]).sum();
        }
    }
    out
}

fn node_matrix(node: &Value) -> [f64; 16] {
    let floats = |key: &str| -> Option<Vec<f64>> { node.get(key)?.as_array()?.iter().map(Value::as_f64).collect() };
    if let Some(m) = floats("matrix").filter(|m| m.len() == 16) {
        return m.try_into().expect("16 values");
    }
    let t = floats("translation").filter(|v| v.len() == 3).unwrap_or(vec![0.0; 3]);
    let q = floats("rotation").filter(|v| v.len() == 4).unwrap_or(vec![0.0, 0.0, 0.0, 1.0]);
    let s = floats("scale").filter(|v| v.len() == 3).unwrap_or(vec![1.0; 3]);
    let (x, y, z, w) = (q[0], q[1], q[2], q[3]);
    let r = [
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y + z * w),
        2.0 * (x * z - y * w),
        2.0 * (x * y - z * w),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z + x * w),
        2.0 * (x * z + y * w),
        2.0 * (y * z - x * w),
        1.0 - 2.0 * (x * x + y * y),
    ];
    [
        r[0] * s[0],
        r[1] * s[0],
        r[2] * s[0],
        0.0,
        r[3] * s[1],
        r[4] * s[1],
        r[5] * s[1],
        0.0,
        r[6] * s[2],
        r[7] * s[2],
        r[8] * s[2],
        0.0,
        t[0],
        t[1],
        t[2],
        1.0,
    ]
}

fn transform_point(m: &[f64; 16], p: [f64; 3]) -> [f64; 3] {
    [
        m[0] * p[0] + m[4] * p[1] + m[8] * p[2] + m[12],
        m[1] * p[0] + m[5] * p[1] + m[9] * p[2] + m[13],
        m[2] * p[0] + m[6] * p[1] + m[10] * p[2] + m[14],
    ]
}

/// Accumulates buffer views, accessors, meshes and nodes into one GLB.
/// Object keys are emitted in sorted order, so equal inputs give equal bytes.
#[derive(Debug, Default)]
pub struct GltfBuilder {
    bin: Vec<u8>,
    buffer_views: Vec<Value>,
    accessors: Vec<Value>,
    meshes: Vec<Value>,
    materials: Vec<Value>,
    nodes: Vec<Value>,
}

impl GltfBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_view(&mut self, bytes: &[u8], target: u32) -> usize {
        while self.bin.len() % 4 != 0 {
            self.bin.push(0);
        }
        self.buffer_views.push(json!({
            "buffer": 0,
            "byteOffset": self.bin.len(),
            "byteLength": bytes.len(),
            "target": target,
        }));
        self.bin.extend_from_slice(bytes);
        self.buffer_views.len() - 1
    }

    fn push_floats<const N: usize>(&mut self, data: &[[f32; N]], kind: &str, bounds: bool) -> usize {
        let bytes: Vec<u8> = data.iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
        let view = self.push_view(&bytes, ARRAY_BUFFER);
        let mut acc = json!({"bufferView": view, "componentType": FLOAT, "count": data.len(), "type": kind});
        if bounds && !data.is_empty() {
            let mut lo = [f32::INFINITY; N];
            let mut hi = [f32::NEG_INFINITY; N];
            for v in data {
                for k in 0..N {
                    lo[k] = lo[k].min(v[k]);
                    hi[k] = hi[k].max(v[k]);
                }
            }
            acc["min"] = json!(lo.to_vec());
            acc["max"] = json!(hi.to_vec());
        }
        self.accessors.push(acc);
        self.accessors.len() - 1
    }

    pub fn push_vec3(&mut self, data: &[[f32; 3]]) -> usize {
        self.push_floats(data, "VEC3", true)
    }

    pub fn push_vec2(&mut self, data: &[[f32; 2]]) -> usize {
        self.push_floats(data, "VEC2", false)
    }

    pub fn push_scalar(&mut self, data: &[f32]) -> usize {
        let wrapped: Vec<[f32; 1]> = data.iter().map(|&v| [v]).collect();
        self.push_floats(&wrapped, "SCALAR", false)
    }

    pub fn push_indices(&mut self, data: &[u32]) -> usize {
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        let view = self.push_view(&bytes, ELEMENT_ARRAY_BUFFER);
        self.accessors.push(json!({
            "bufferView": view,
            "componentType": UNSIGNED_INT,
            "count": data.len(),
            "type": "SCALAR",
        }));
        self.accessors.len() - 1
    }

    pub fn add_material(&mut self, name: &str, rgba: [f64; 4]) -> usize {
        self.materials.push(json!({
            "name": name,
            "pbrMetallicRoughness": {"baseColorFactor": rgba, "metallicFactor": 0.0, "roughnessFactor": 1.0},
        }));
        self.materials.len() - 1
    }

    /// Adds a one-primitive triangle mesh; `attributes` maps semantic names
    /// to accessor indices.
    pub fn add_mesh(&mut self, name: &str, attributes: &[(&str, usize)], indices: Option<usize>, material: Option<usize>) -> usize {
        self.add_mesh_with_mode(name, attributes, indices, material, MODE_TRIANGLES)
    }

    pub fn add_mesh_with_mode(
        &mut self,
        name: &str,
        attributes: &[(&str, usize)],
        indices: Option<usize>,
        material: Option<usize>,
        mode: u32,
    ) -> usize {
        let attrs: Map<String, Value> = attributes.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
        let mut prim = json!({"attributes": attrs, "mode": mode});
        if let Some(i) = indices {
            prim["indices"] = json!(i);
        }
        if let Some(m) = material {
            prim["material"] = json!(m);
        }
        self.meshes.push(json!({"name": name, "primitives": [prim]}));
        self.meshes.len() - 1
    }

    pub fn add_node(&mut self, node: Value) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    pub fn node_mut(&mut self, index: usize) -> &mut Value {
        &mut self.nodes[index]
    }

    /// Emits the container with one scene over `roots`. `asset_extras` lands
    /// in the asset object.
    pub fn finish(self, roots: &[usize], asset_extras: Option<Value>) -> Vec<u8> {
        let mut asset = json!({"version": "2.0", "generator": "geoscene"});
        if let Some(e) = asset_extras {
            asset["extras"] = e;
        }
        let mut doc = json!({
            "asset": asset,
            "scene": 0,
            "scenes": [{"nodes": roots}],
        });
        let put = |doc: &mut Value, key: &str, items: Vec<Value>| {
            if !items.is_empty() {
                doc[key] = Value::Array(items);
            }
        };
        put(&mut doc, "nodes", self.nodes);
        put(&mut doc, "meshes", self.meshes);
        put(&mut doc, "materials", self.materials);
        put(&mut doc, "accessors", self.accessors);
        put(&mut doc, "bufferViews", self.buffer_views);
        if !self.bin.is_empty() {
            let mut len = self.bin.len();
            len += (4 - len % 4) % 4;
            doc["buffers"] = json!([{"byteLength": len}]);
        }
        write_glb(&doc, &self.bin)
    }
}
