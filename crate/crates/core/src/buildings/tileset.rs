use serde_json::{json, Value};

use super::BuildingError;
use crate::geom::{GeoPoint, Rect, SceneProjection};

#[derive(Debug, Clone, PartialEq)]
pub struct TileNode {
    /// Footprint of the bounding volume in scene coordinates.
    pub bounds: Rect,
    pub content: Option<String>,
    pub children: Vec<TileNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TilesetIndex {
    pub root: TileNode,
}

fn bad(msg: impl Into<String>) -> BuildingError {
    BuildingError::Tileset(msg.into())
}

fn numbers(v: &Value, n: usize) -> Result<Vec<f64>, BuildingError> {
    let a = v.as_array().filter(|a| a.len() == n).ok_or_else(|| bad(format!("expected {n} numbers")))?;
    a.iter().map(|x| x.as_f64().ok_or_else(|| bad("non-numeric bounding volume"))).collect()
}

fn volume_footprint(bv: &Value, proj: Option<&dyn SceneProjection>) -> Result<Rect, BuildingError> {
    if let Some(b) = bv.get("box") {
        let b = numbers(b, 12)?;
        let hx = b[3].abs() + b[6].abs() + b[9].abs();
        let hy = b[4].abs() + b[7].abs() + b[10].abs();
        return Ok(Rect::new(b[0] - hx, b[1] - hy, b[0] + hx, b[1] + hy));
    }
    if let Some(r) = bv.get("region") {
        let r = numbers(r, 6)?;
        let proj = proj.ok_or_else(|| bad("region volumes need a geographic frame"))?;
        let corner = |lat: f64, lon: f64| -> Result<_, BuildingError> {
            let g = GeoPoint::new(lat.to_degrees(), lon.to_degrees()).map_err(|e| bad(e.to_string()))?;
            proj.to_scene(g).map_err(|e| bad(e.to_string()))
        };
        let pts = [corner(r[1], r[0])?, corner(r[1], r[2])?, corner(r[3], r[0])?, corner(r[3], r[2])?];
        return Ok(Rect::from_points(pts).expect("four points"));
    }
    Err(bad("unsupported bounding volume"))
}

fn parse_node(v: &Value, proj: Option<&dyn SceneProjection>, depth: usize) -> Result<TileNode, BuildingError> {
    if depth > 64 {
        return Err(bad("tile hierarchy too deep"));
    }
    let bounds = volume_footprint(v.get("boundingVolume").ok_or_else(|| bad("tile without boundingVolume"))?, proj)?;
    let content = v.get("content").and_then(|c| c.get("uri").or_else(|| c.get("url"))).and_then(Value::as_str).map(str::to_string);
    let mut children = Vec::new();
    for c in v.get("children").and_then(Value::as_array).map_or(&[][..], Vec::as_slice) {
        let child = parse_node(c, proj, depth + 1)?;
        let eps = 1e-6 * (1.0 + bounds.width().max(bounds.height()));
        if !bounds.contains_rect(&child.bounds, eps) {
            return Err(bad("child bounding volume exceeds its parent"));
        }
        children.push(child);
    }
    Ok(TileNode { bounds, content, children })
}

/// Parses a tileset document. `region` volumes are converted through `proj`;
/// `box` volumes are taken to be in scene coordinates already.
pub fn parse_tileset(text: &str, proj: Option<&dyn SceneProjection>) -> Result<TilesetIndex, BuildingError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let root = doc.get("root").ok_or_else(|| bad("missing root tile"))?;
    Ok(TilesetIndex { root: parse_node(root, proj, 0)? })
}

impl TileNode {
    pub fn leaf(bounds: Rect, content: &str) -> TileNode {
        TileNode { bounds, content: Some(content.to_string()), children: vec![] }
    }

    fn to_json(&self) -> Value {
        let c = self.bounds.center();
        let (hx, hy) = (self.bounds.width() / 2.0, self.bounds.height() / 2.0);
        let mut v = json!({
            "boundingVolume": {"box": [c.x, c.y, 0.0, hx, 0.0, 0.0, 0.0, hy, 0.0, 0.0, 0.0, 1000.0]},
            "geometricError": 0.0,
        });
        if let Some(uri) = &self.content {
            v["content"] = json!({"uri": uri});
        }
        if !self.children.is_empty() {
            v["children"] = Value::Array(self.children.iter().map(TileNode::to_json).collect());
        }
        v
    }
}

impl TilesetIndex {
    /// Content locators of every tile whose footprint overlaps `region`,
    /// visited depth-first in document order.
    pub fn contents_in(&self, region: &Rect) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            if !node.bounds.overlaps(region) {
                continue;
            }
            if let Some(c) = &node.content {
                out.push(c.clone());
            }
            stack.extend(node.children.iter().rev());
        }
        out
    }

    /// Document with `box` volumes in scene coordinates.
    pub fn to_json(&self) -> String {
        let doc = json!({"asset": {"version": "1.0"}, "geometricError": 0.0, "root": self.root.to_json()});
        serde_json::to_string_pretty(&doc).expect("json values serialize")
    }
}
