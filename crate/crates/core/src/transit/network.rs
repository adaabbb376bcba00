use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TransitError;
use crate::geom::{closest_point_on_segment, GeoPoint, LocalFrame, Point2D, SceneProjection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub name: String,
    pub arc: f64,
}

/// Route polyline with cumulative arc lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub id: String,
    pub destination: String,
    pub points: Vec<Point2D>,
    /// `cumulative[i]` is the arc length at `points[i]`.
    pub cumulative: Vec<f64>,
    pub stops: Vec<Stop>,
}

/// Closest point of one polyline segment to a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentMatch {
    pub segment: usize,
    pub arc: f64,
    pub distance: f64,
    pub point: Point2D,
}

impl Route {
    pub fn new(id: &str, destination: &str, points: Vec<Point2D>, stops: Vec<Stop>) -> Result<Route, TransitError> {
        let invalid = |reason: String| TransitError::InvalidRoute { route: id.to_string(), reason };
        if id.is_empty() || id.contains(char::is_whitespace) {
            return Err(invalid("route ids must be non-empty without whitespace".into()));
        }
        if points.len() < 2 {
            return Err(invalid(format!("{} point(s); at least 2 needed", points.len())));
        }
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for (i, w) in points.windows(2).enumerate() {
            let d = w[0].distance(w[1]);
            if !(d > 0.0 && d.is_finite()) {
                return Err(invalid(format!("segment {i} has no length; cumulative arc must increase")));
            }
            cumulative.push(cumulative[i] + d);
        }
        let length = *cumulative.last().expect("two points");
        let mut last = 0.0;
        for s in &stops {
            if !(0.0..=length).contains(&s.arc) || s.arc < last {
                return Err(invalid(format!("stop {} at {} is out of order or off the route", s.name, s.arc)));
            }
            last = s.arc;
        }
        Ok(Route { id: id.to_string(), destination: destination.to_string(), points, cumulative, stops })
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("validated")
    }

    /// Segment holding `arc`; interior vertices belong to the following
    /// segment.
    fn segment_at(&self, arc: f64) -> usize {
        let i = self.cumulative.partition_point(|&c| c <= arc);
        i.clamp(1, self.points.len() - 1) - 1
    }

    /// Point at `arc` (clamped to the route) and the compass heading of its
    /// segment in degrees, clockwise from north.
    pub fn point_at(&self, arc: f64) -> (Point2D, f64) {
        let arc = arc.clamp(0.0, self.length());
        let s = self.segment_at(arc);
        let (a, b) = (self.points[s], self.points[s + 1]);
        let len = self.cumulative[s + 1] - self.cumulative[s];
        let t = ((arc - self.cumulative[s]) / len).clamp(0.0, 1.0);
        let p = Point2D::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
        let heading = (b.x - a.x).atan2(b.y - a.y).to_degrees().rem_euclid(360.0);
        (p, heading)
    }

    /// Closest point on every segment, in route order.
    pub fn segment_matches(&self, p: Point2D) -> Vec<SegmentMatch> {
        self.points
            .windows(2)
            .enumerate()
            .map(|(s, w)| {
                let (q, t) = closest_point_on_segment(p, w[0], w[1]);
                SegmentMatch {
                    segment: s,
                    arc: self.cumulative[s] + t * (self.cumulative[s + 1] - self.cumulative[s]),
                    distance: p.distance(q),
                    point: q,
                }
            })
            .collect()
    }

    /// Distance from `p` to the polyline.
    pub fn distance_to(&self, p: Point2D) -> f64 {
        self.segment_matches(p).iter().map(|m| m.distance).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitNetwork {
    pub frame: LocalFrame,
    pub routes: BTreeMap<String, Route>,
    pub agencies: Vec<String>,
}

impl TransitNetwork {
    pub fn route(&self, id: &str) -> Result<&Route, TransitError> {
        self.routes.get(id).ok_or_else(|| TransitError::RouteUnknown(id.to_string()))
    }

    pub fn to_scene(&self, g: GeoPoint) -> Result<Point2D, TransitError> {
        Ok(self.frame.to_scene(g)?)
    }

    /// Document form accepted by [`load_network`], with scene coordinates.
    pub fn to_document(&self) -> String {
        let mut out = format!("origin {} {}\n", self.frame.origin.lat, self.frame.origin.lon);
        for a in &self.agencies {
            out.push_str(&format!("agency {a}\n"));
        }
        for r in self.routes.values() {
            out.push_str(&format!("route {} {}\n", r.id, r.destination));
            for p in &r.points {
                out.push_str(&format!("xy {} {}\n", p.x, p.y));
            }
            for s in &r.stops {
                out.push_str(&format!("stop {} {}\n", s.arc, s.name));
            }
            out.push_str("end\n");
        }
        out
    }
}

struct PendingRoute {
    id: String,
    destination: String,
    points: Vec<Point2D>,
    stops: Vec<Stop>,
}

/// Parses the line-oriented network document:
///
/// ```text
/// origin <lat> <lon>          optional, overrides `default_frame`
/// agency <label>
/// route <id> <destination>
/// pt <lat> <lon>              geographic vertex, or
/// xy <x> <y>                  scene-meter vertex
/// stop <arc-m> <name>
/// end
/// ```
///
/// `#` starts a comment line.
pub fn load_network(text: &str, default_frame: Option<LocalFrame>) -> Result<TransitNetwork, TransitError> {
    let mut frame = default_frame;
    let mut agencies = Vec::new();
    let mut routes = BTreeMap::new();
    let mut current: Option<PendingRoute> = None;
    let mut seen_any = false;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let err = |msg: String| TransitError::Parse { line: line_no, msg };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        seen_any = true;
        let (key, rest) = line.split_once(char::is_whitespace).map_or((line, ""), |(k, r)| (k, r.trim()));
        let nums = |count: usize| -> Result<Vec<f64>, TransitError> {
            let v: Vec<f64> = rest.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|e| err(format!("{e}")))?;
            if v.len() != count || v.iter().any(|x| !x.is_finite()) {
                return Err(err(format!("{key} expects {count} finite numbers")));
            }
            Ok(v)
        };
        match key {
            "origin" => {
                let v = nums(2)?;
                frame = Some(LocalFrame::new(GeoPoint::new(v[0], v[1]).map_err(|e| err(e.to_string()))?));
            }
            "agency" => agencies.push(rest.to_string()),
            "route" => {
                if current.is_some() {
                    return Err(err("route opened before the previous one ended".into()));
                }
                let (id, dest) = rest.split_once(char::is_whitespace).map_or((rest, ""), |(i, d)| (i, d.trim()));
                if id.is_empty() {
                    return Err(err("route without id".into()));
                }
                current = Some(PendingRoute { id: id.to_string(), destination: dest.to_string(), points: vec![], stops: vec![] });
            }
            "pt" | "xy" => {
                let v = nums(2)?;
                let r = current.as_mut().ok_or_else(|| err("vertex outside a route".into()))?;
                let p = if key == "xy" {
                    Point2D::new(v[0], v[1])
                } else {
                    let f = frame.ok_or_else(|| err("geographic vertex before an origin".into()))?;
                    f.to_scene(GeoPoint::new(v[0], v[1]).map_err(|e| err(e.to_string()))?).map_err(|e| err(e.to_string()))?
                };
                r.points.push(p);
            }
            "stop" => {
                let r = current.as_mut().ok_or_else(|| err("stop outside a route".into()))?;
                let (arc, name) = rest.split_once(char::is_whitespace).map_or((rest, ""), |(a, s)| (a, s.trim()));
                let arc: f64 = arc.parse().map_err(|_| err(format!("bad stop arc {arc}")))?;
                r.stops.push(Stop { name: name.to_string(), arc });
            }
            "end" => {
                let r = current.take().ok_or_else(|| err("end without route".into()))?;
                if routes.contains_key(&r.id) {
                    return Err(err(format!("duplicate route {}", r.id)));
                }
                let route = Route::new(&r.id, &r.destination, r.points, r.stops)?;
                routes.insert(r.id, route);
            }
            other => return Err(err(format!("unknown record {other}"))),
        }
    }
    if current.is_some() {
        return Err(TransitError::Parse { line: text.lines().count(), msg: "unterminated route".into() });
    }
    if !seen_any || routes.is_empty() {
        return Err(TransitError::Parse { line: 0, msg: "document defines no routes".into() });
    }
    let frame = frame.ok_or(TransitError::Parse { line: 0, msg: "no origin given".into() })?;
    Ok(TransitNetwork { frame, routes, agencies })
}
