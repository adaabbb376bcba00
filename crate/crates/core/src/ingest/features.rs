use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::IngestError;
use crate::geom::{ClassCode, GeoPoint, Point2D, PolygonWithHoles, Rect, SceneProjection};
use crate::landcover::ClassTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub polygon: PolygonWithHoles,
    pub attributes: BTreeMap<String, String>,
}

impl Feature {
    pub fn class_code(&self) -> ClassCode {
        self.polygon.class_code
    }
}

/// Normalized polygon features in scene coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCollection {
    pub features: Vec<Feature>,
    pub bounds: Rect,
    /// Features rejected during normalization.
    pub dropped: usize,
}

impl FeatureCollection {
    pub fn new(bounds: Rect) -> Self {
        FeatureCollection { features: Vec::new(), bounds, dropped: 0 }
    }

    pub fn from_polygons(polygons: impl IntoIterator<Item = PolygonWithHoles>, bounds: Rect) -> Self {
        let features = polygons.into_iter().map(|polygon| Feature { polygon, attributes: BTreeMap::new() }).collect();
        FeatureCollection { features, bounds, dropped: 0 }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn polygons(&self) -> impl Iterator<Item = &PolygonWithHoles> {
        self.features.iter().map(|f| &f.polygon)
    }

    /// Appends the features of `other`, widening the bounds.
    pub fn extend(&mut self, other: FeatureCollection) {
        self.bounds = self.bounds.union(&other.bounds);
        self.dropped += other.dropped;
        self.features.extend(other.features);
    }
}

fn attribute_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn resolve_class(props: &BTreeMap<String, String>, table: &ClassTable) -> Option<ClassCode> {
    if let Some(code) = props.get("class_code") {
        let code: ClassCode = code.parse().ok()?;
        return table.get(code).map(|c| c.code);
    }
    props.get("class").and_then(|name| table.by_name(name)).map(|c| c.code)
}

fn parse_ring(v: &Value, proj: &dyn SceneProjection) -> Option<Vec<Point2D>> {
    let mut pts = Vec::new();
    for pos in v.as_array()? {
        let pos = pos.as_array()?;
        let (lon, lat) = (pos.first()?.as_f64()?, pos.get(1)?.as_f64()?);
        pts.push(proj.to_scene(GeoPoint::new(lat, lon).ok()?).ok()?);
    }
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    Some(pts)
}

fn parse_polygon(v: &Value, proj: &dyn SceneProjection, class: ClassCode) -> Option<PolygonWithHoles> {
    let rings = v.as_array()?;
    let outer = parse_ring(rings.first()?, proj)?;
    let holes = rings[1..].iter().map(|r| parse_ring(r, proj)).collect::<Option<Vec<_>>>()?;
    PolygonWithHoles::from_coords(outer, holes, class).ok()
}

/// Decodes a GeoJSON feature collection with lon/lat positions into scene
/// coordinates. Features whose class cannot be resolved or whose geometry
/// fails validation are dropped and counted.
pub fn parse_geojson(text: &str, proj: &dyn SceneProjection, table: &ClassTable, bounds: Rect) -> Result<FeatureCollection, IngestError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| IngestError::Decode(e.to_string()))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(IngestError::Decode("expected a FeatureCollection document".into()));
    }
    let items = doc.get("features").and_then(Value::as_array).ok_or_else(|| IngestError::Decode("missing features array".into()))?;
    let mut fc = FeatureCollection::new(bounds);
    for item in items {
        let attributes: BTreeMap<String, String> = item
            .get("properties")
            .and_then(Value::as_object)
            .map(|m| m.iter().map(|(k, v)| (k.clone(), attribute_string(v))).collect())
            .unwrap_or_default();
        let Some(class) = resolve_class(&attributes, table) else {
            fc.dropped += 1;
            continue;
        };
        let geometry = item.get("geometry");
        let kind = geometry.and_then(|g| g.get("type")).and_then(Value::as_str);
        let coords = geometry.and_then(|g| g.get("coordinates"));
        let polygons: Option<Vec<PolygonWithHoles>> = match (kind, coords) {
            (Some("Polygon"), Some(c)) => parse_polygon(c, proj, class).map(|p| vec![p]),
            (Some("MultiPolygon"), Some(Value::Array(parts))) => parts.iter().map(|c| parse_polygon(c, proj, class)).collect(),
            _ => None,
        };
        match polygons {
            Some(ps) => {
                for polygon in ps {
                    fc.features.push(Feature { polygon, attributes: attributes.clone() });
                }
            }
            None => fc.dropped += 1,
        }
    }
    if fc.dropped > 0 {
        log::warn!("dropped {} invalid land-cover features", fc.dropped);
    }
    Ok(fc)
}

fn ring_json(ring: &[Point2D], proj: &dyn SceneProjection) -> Value {
    let mut coords: Vec<Value> = ring
        .iter()
        .map(|&p| {
            let g = proj.to_geo(p);
            serde_json::json!([g.lon, g.lat])
        })
        .collect();
    if let Some(first) = coords.first().cloned() {
        coords.push(first);
    }
    Value::Array(coords)
}

/// Encodes scene polygons as a GeoJSON feature collection with lon/lat
/// positions and a `class` property taken from the class table.
pub fn write_geojson(polygons: &[(PolygonWithHoles, BTreeMap<String, String>)], proj: &dyn SceneProjection, table: &ClassTable) -> String {
    let features: Vec<Value> = polygons
        .iter()
        .map(|(poly, attrs)| {
            let mut props: serde_json::Map<String, Value> = attrs.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
            if let Some(c) = table.get(poly.class_code) {
                props.insert("class".into(), Value::String(c.name.clone()));
            }
            let rings: Vec<Value> = poly.rings().map(|r| ring_json(r.vertices(), proj)).collect();
            serde_json::json!({
                "type": "Feature",
                "properties": props,
                "geometry": {"type": "Polygon", "coordinates": rings},
            })
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({"type": "FeatureCollection", "features": features})).expect("json values serialize")
}
