use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::Serialize;

use super::feed::{Clock, FeedReplay};
use super::{extrapolate, update_vehicle, Snapshot, SnapshotEntry, TransitError, TransitNetwork, VehicleFix, VehicleState};
use crate::geom::{Point2D, Rect};

/// Vehicle states as of some feed instant. Replaced wholesale on every
/// write, so readers holding an `Arc` never see a partial update.
#[derive(Debug, Clone, Default, Serialize)]
pub struct FleetState {
    pub vehicles: BTreeMap<String, VehicleState>,
    pub applied: u64,
    /// Dropped fixes by reason.
    pub dropped: BTreeMap<String, u64>,
}

pub struct TransitService {
    net: Arc<TransitNetwork>,
    clock: Arc<dyn Clock>,
    state: RwLock<Arc<FleetState>>,
}

impl TransitService {
    pub fn new(net: Arc<TransitNetwork>, clock: Arc<dyn Clock>) -> Self {
        TransitService { net, clock, state: RwLock::new(Arc::new(FleetState::default())) }
    }

    pub fn network(&self) -> &TransitNetwork {
        &self.net
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    pub fn state(&self) -> Arc<FleetState> {
        self.state.read().expect("state lock").clone()
    }

    /// Applies a batch of fixes as one update. Stale, off-route and unknown
    /// route fixes are dropped and counted.
    pub fn apply_fixes(&self, fixes: &[VehicleFix]) {
        if fixes.is_empty() {
            return;
        }
        let mut guard = self.state.write().expect("state lock");
        let mut next = FleetState::clone(&guard);
        for fix in fixes {
            let result = match next.vehicles.get(&fix.vehicle) {
                Some(prev) => update_vehicle(prev, fix, &self.net),
                None => VehicleState::from_fix(fix, &self.net),
            };
            match result {
                Ok(s) => {
                    next.vehicles.insert(fix.vehicle.clone(), s);
                    next.applied += 1;
                }
                Err(e) => {
                    let reason = match e {
                        TransitError::StaleFix { .. } => "stale_fix",
                        TransitError::FixTooFar { .. } => "fix_too_far",
                        TransitError::RouteUnknown(_) => "route_unknown",
                        _ => "invalid_fix",
                    };
                    log::debug!("dropping fix for {}: {e}", fix.vehicle);
                    *next.dropped.entry(reason.to_string()).or_default() += 1;
                }
            }
        }
        *guard = Arc::new(next);
    }

    /// Vehicles inside `bbox` (inclusive) at the current clock time.
    pub fn snapshot(&self, bbox: Option<Rect>) -> Snapshot {
        let state = self.state();
        let t = self.clock.now();
        let vehicles = state
            .vehicles
            .values()
            .filter_map(|v| extrapolate(v, t, &self.net).ok())
            .filter(|e| bbox.is_none_or(|b| b.contains(e.position)))
            .collect();
        Snapshot { server_time: t, vehicles }
    }

    /// Answers one request line with a complete response record.
    pub fn respond(&self, line: &str) -> String {
        match parse_request(line) {
            Ok(bbox) => format_snapshot(&self.snapshot(Some(bbox))),
            Err(e) => format!("ERR {}\n\n", e.to_string().replace('\n', " ")),
        }
    }
}

/// Parses `SNAPSHOT <min-x> <min-y> <max-x> <max-y>`.
pub fn parse_request(line: &str) -> Result<Rect, TransitError> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some("SNAPSHOT") {
        return Err(TransitError::Protocol(format!("unknown request {:?}", line.trim())));
    }
    let v: Vec<f64> = parts
        .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect::<Option<_>>()
        .ok_or_else(|| TransitError::Protocol("bounding box values must be finite numbers".into()))?;
    let [minx, miny, maxx, maxy] = v[..] else {
        return Err(TransitError::Protocol(format!("expected 4 bounding box values, found {}", v.len())));
    };
    if minx > maxx || miny > maxy {
        return Err(TransitError::Protocol("bounding box min exceeds max".into()));
    }
    Ok(Rect::new(minx, miny, maxx, maxy))
}

pub fn format_snapshot(s: &Snapshot) -> String {
    let mut out = format!("OK {:.3} {}\n", s.server_time, s.vehicles.len());
    for v in &s.vehicles {
        out.push_str(&format!(
            "{} {} {:.3} {:.3} {:.3} {:.3} {}\n",
            v.vehicle, v.route, v.arc, v.position.x, v.position.y, v.heading, v.destination
        ));
    }
    out.push('\n');
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireVehicle {
    pub id: String,
    pub route: String,
    pub arc: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub destination: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireSnapshot {
    pub server_time: f64,
    pub vehicles: Vec<WireVehicle>,
}

impl WireSnapshot {
    /// Re-derives positions from the arc on the client's copy of the network,
    /// which keeps them exactly on the polyline despite 3-decimal rounding.
    pub fn resolve(&self, net: &TransitNetwork) -> Result<Snapshot, TransitError> {
        let vehicles = self
            .vehicles
            .iter()
            .map(|v| {
                let route = net.route(&v.route)?;
                let (position, heading) = route.point_at(v.arc);
                Ok(SnapshotEntry {
                    vehicle: v.id.clone(),
                    route: v.route.clone(),
                    arc: v.arc.clamp(0.0, route.length()),
                    position,
                    heading,
                    destination: v.destination.clone(),
                })
            })
            .collect::<Result<_, TransitError>>()?;
        Ok(Snapshot { server_time: self.server_time, vehicles })
    }
}

/// Parses a response record (header and vehicle lines; the blank terminator
/// is optional).
pub fn parse_snapshot(text: &str) -> Result<WireSnapshot, TransitError> {
    let bad = |m: String| TransitError::Protocol(m);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty response".into()))?;
    if let Some(msg) = header.strip_prefix("ERR") {
        return Err(bad(format!("server error:{msg}")));
    }
    let h: Vec<&str> = header.split_whitespace().collect();
    let ["OK", t, n] = h[..] else {
        return Err(bad(format!("bad header {header:?}")));
    };
    let server_time: f64 = t.parse().map_err(|_| bad(format!("bad time {t}")))?;
    let count: usize = n.parse().map_err(|_| bad(format!("bad count {n}")))?;
    let mut vehicles = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines.next().ok_or_else(|| bad("truncated response".into()))?;
        let mut f = line.splitn(7, ' ');
        let mut field = || f.next().ok_or_else(|| bad(format!("short vehicle line {line:?}")));
        let id = field()?.to_string();
        let route = field()?.to_string();
        let mut num = || -> Result<f64, TransitError> {
            let s = field()?;
            s.parse().map_err(|_| bad(format!("bad number {s}")))
        };
        let (arc, x, y, heading) = (num()?, num()?, num()?, num()?);
        let destination = f.next().unwrap_or("").to_string();
        vehicles.push(WireVehicle { id, route, arc, x, y, heading, destination });
    }
    Ok(WireSnapshot { server_time, vehicles })
}

/// Running server; dropping the handle does not stop it, call [`shutdown`].
///
/// [`shutdown`]: ServerHandle::shutdown
pub struct ServerHandle {
    pub addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    /// Stops accepting connections and ends the feed thread. Connected
    /// clients are served until they disconnect.
    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        for t in self.threads {
            let _ = t.join();
        }
    }

    /// Blocks until the server stops.
    pub fn wait(self) {
        for t in self.threads {
            let _ = t.join();
        }
    }
}

/// Serves snapshots on `listener`, one thread per connection. With a feed, a
/// single writer thread applies fixes as the service clock passes them.
pub fn serve(service: Arc<TransitService>, listener: TcpListener, feed: Option<FeedReplay>) -> Result<ServerHandle, TransitError> {
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let mut threads = Vec::new();
    if let Some(mut feed) = feed {
        let (svc, stop) = (service.clone(), stop.clone());
        threads.push(std::thread::spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                let due = feed.due(svc.clock().now()).to_vec();
                svc.apply_fixes(&due);
                if feed.is_done() {
                    break;
                }
                std::thread::sleep(Duration::from_millis(5));
            }
        }));
    }
    let accept_stop = stop.clone();
    threads.push(std::thread::spawn(move || {
        for conn in listener.incoming() {
            if accept_stop.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(stream) => {
                    let svc = service.clone();
                    std::thread::spawn(move || {
                        if let Err(e) = handle_client(&svc, stream) {
                            log::debug!("client connection ended: {e}");
                        }
                    });
                }
                Err(e) => log::warn!("accept failed: {e}"),
            }
        }
    }));
    Ok(ServerHandle { addr, stop, threads })
}

fn handle_client(service: &TransitService, stream: TcpStream) -> std::io::Result<()> {
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writer.write_all(service.respond(&line).as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

pub struct TransitClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TransitClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<TransitClient, TransitError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(TransitClient { writer: stream.try_clone()?, reader: BufReader::new(stream) })
    }

    /// Sends one raw request line and returns the response record including
    /// its blank terminator.
    pub fn request(&mut self, line: &str) -> Result<String, TransitError> {
        self.writer.write_all(format!("{}\n", line.trim_end()).as_bytes())?;
        self.writer.flush()?;
        let mut out = String::new();
        loop {
            let mut l = String::new();
            if self.reader.read_line(&mut l)? == 0 {
                return Err(TransitError::Protocol("connection closed mid-response".into()));
            }
            let done = l == "\n";
            out.push_str(&l);
            if done {
                return Ok(out);
            }
        }
    }

    pub fn snapshot(&mut self, bbox: Rect) -> Result<WireSnapshot, TransitError> {
        let text = self.request(&format!("SNAPSHOT {} {} {} {}", bbox.min.x, bbox.min.y, bbox.max.x, bbox.max.y))?;
        parse_snapshot(&text)
    }
}

/// Wire position of a vehicle.
impl WireVehicle {
    pub fn position(&self) -> Point2D {
        Point2D::new(self.x, self.y)
    }
}
