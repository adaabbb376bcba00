//! Live transport: route network, map matching of sparse GPS fixes,
//! extrapolation along routes, a TCP snapshot service and a client-side
//! interpolation buffer.

mod buffer;
mod feed;
mod network;
mod service;

pub use buffer::{ClientBuffer, FramePosition};
pub use feed::{parse_replay, write_replay, Clock, FeedReplay, ManualClock, ReplayClock};
pub use network::{load_network, Route, SegmentMatch, Stop, TransitNetwork};
pub use service::{
    format_snapshot, parse_request, parse_snapshot, serve, FleetState, ServerHandle, TransitClient, TransitService, WireSnapshot,
    WireVehicle,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{GeoPoint, GeomError, Point2D};

pub const V_MAX: f64 = 40.0;
pub const D_MAX: f64 = 50.0;
/// Candidates within this distance of the best match count as equidistant.
pub const TIE_EPS_M: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TransitError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid route {route}: {reason}")]
    InvalidRoute { route: String, reason: String },
    #[error("unknown route {0}")]
    RouteUnknown(String),
    #[error("fix is {distance:.1} m from its route (limit {limit} m)")]
    FixTooFar { distance: f64, limit: f64 },
    #[error("fix at {fix_time} is not newer than {last_time}")]
    StaleFix { fix_time: f64, last_time: f64 },
    #[error("snapshot received at {time} is not after {last}")]
    OutOfOrder { time: f64, last: f64 },
    #[error("client buffer is empty")]
    EmptyBuffer,
    #[error("protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleFix {
    pub vehicle: String,
    pub route: String,
    pub position: GeoPoint,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub vehicle: String,
    pub route: String,
    pub arc_pos: f64,
    pub speed: f64,
    pub destination: String,
    pub last_fix_time: f64,
    pub last_fix_arc: f64,
}

/// One vehicle of a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub vehicle: String,
    pub route: String,
    pub arc: f64,
    pub position: Point2D,
    pub heading: f64,
    pub destination: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Snapshot {
    pub server_time: f64,
    pub vehicles: Vec<SnapshotEntry>,
}

/// Arc position of the closest point on the fix's route. Among equidistant
/// candidates the first one at or ahead of `previous_arc` wins; if none is
/// ahead, the one nearest behind it.
pub fn map_match(fix: &VehicleFix, net: &TransitNetwork, previous_arc: Option<f64>) -> Result<f64, TransitError> {
    let route = net.route(&fix.route)?;
    let p = net.to_scene(fix.position)?;
    match_point(route, p, previous_arc)
}

/// [`map_match`] on a scene point.
pub fn match_point(route: &Route, p: Point2D, previous_arc: Option<f64>) -> Result<f64, TransitError> {
    let matches = route.segment_matches(p);
    let best = matches.iter().map(|m| m.distance).fold(f64::INFINITY, f64::min);
    if best > D_MAX {
        return Err(TransitError::FixTooFar { distance: best, limit: D_MAX });
    }
    let candidates = matches.iter().filter(|m| m.distance <= best + TIE_EPS_M).map(|m| m.arc);
    let Some(prev) = previous_arc else {
        return Ok(candidates.fold(f64::INFINITY, f64::min));
    };
    let (ahead, behind) =
        candidates.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), arc| if arc >= prev { (a.min(arc), b) } else { (a, b.max(arc)) });
    Ok(if ahead.is_finite() { ahead } else { behind })
}

impl VehicleState {
    /// State after a vehicle's first fix: matched arc, zero speed.
    pub fn from_fix(fix: &VehicleFix, net: &TransitNetwork) -> Result<VehicleState, TransitError> {
        let arc = map_match(fix, net, None)?;
        Ok(VehicleState {
            vehicle: fix.vehicle.clone(),
            route: fix.route.clone(),
            arc_pos: arc,
            speed: 0.0,
            destination: net.route(&fix.route)?.destination.clone(),
            last_fix_time: fix.timestamp,
            last_fix_arc: arc,
        })
    }
}

/// Applies a newer fix. A fix on a different route starts the vehicle over on
/// that route with zero speed.
pub fn update_vehicle(state: &VehicleState, fix: &VehicleFix, net: &TransitNetwork) -> Result<VehicleState, TransitError> {
    if !fix.timestamp.is_finite() || fix.timestamp <= state.last_fix_time {
        return Err(TransitError::StaleFix { fix_time: fix.timestamp, last_time: state.last_fix_time });
    }
    if fix.route != state.route {
        return VehicleState::from_fix(fix, net);
    }
    let arc = map_match(fix, net, Some(state.last_fix_arc))?;
    let dt = fix.timestamp - state.last_fix_time;
    let speed = ((arc - state.last_fix_arc) / dt).clamp(0.0, V_MAX);
    Ok(VehicleState { arc_pos: arc, speed, last_fix_time: fix.timestamp, last_fix_arc: arc, ..state.clone() })
}

/// Arc position at time `t`, clamped to the route end. Times before the last
/// fix hold the fix position.
pub fn extrapolated_arc(state: &VehicleState, t: f64, route_length: f64) -> f64 {
    let dt = (t - state.last_fix_time).max(0.0);
    (state.last_fix_arc + state.speed * dt).min(route_length)
}

pub fn extrapolate(state: &VehicleState, t: f64, net: &TransitNetwork) -> Result<SnapshotEntry, TransitError> {
    let route = net.route(&state.route)?;
    let arc = extrapolated_arc(state, t, route.length());
    let (position, heading) = route.point_at(arc);
    Ok(SnapshotEntry {
        vehicle: state.vehicle.clone(),
        route: state.route.clone(),
        arc,
        position,
        heading,
        destination: state.destination.clone(),
    })
}
