use std::collections::BTreeMap;
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use geoscene::geom::{Point2D, Rect, SceneProjection};
use geoscene::transit::{
    load_network, parse_replay, parse_snapshot, serve, write_replay, ClientBuffer, FeedReplay, ManualClock, SnapshotEntry, TransitClient,
    TransitNetwork, TransitService, VehicleFix,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::oracle::segment_distance;
use crate::{ensure, Outcome};

const ON_LINE_TOL: f64 = 1e-6;
const REPLAY_S: usize = 300;
const FRAMES_PER_S: usize = 60;
const CLIENTS: usize = 4;
const BATCHES: usize = 400;
const REQUEST: &str = "SNAPSHOT -1e6 -1e6 1e6 1e6";

/// Two routes sharing their first 300 m.
const NETWORK: &str = "\
origin 52.0 5.0
route A Noord
xy 0 0
xy 300 0
xy 300 200
xy 600 200
end
route B Zuid
xy 0 0
xy 300 0
xy 300 -200
xy 500 -350
end
";

fn off_line(net: &TransitNetwork, e: &SnapshotEntry) -> Result<f64, String> {
    let route = net.routes.get(&e.route).ok_or_else(|| format!("unknown route {}", e.route))?;
    Ok(route.points.windows(2).map(|s| segment_distance(e.position, s[0], s[1])).fold(f64::INFINITY, f64::min))
}

fn synthetic_feed(net: &TransitNetwork, rng: &mut StdRng) -> Vec<VehicleFix> {
    let mut fixes = Vec::new();
    for v in 0..6 {
        let route = &net.routes[if v % 2 == 0 { "A" } else { "B" }];
        let (start, speed) = (rng.random_range(0.0..100.0), rng.random_range(3.0..9.0));
        let mut t = rng.random_range(0.0..20.0);
        while t <= REPLAY_S as f64 {
            let (p, _) = route.point_at(start + speed * t);
            let (a, r) = (rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..3.0));
            let jittered = Point2D::new(p.x + r * a.cos(), p.y + r * a.sin());
            fixes.push(VehicleFix {
                vehicle: format!("bus-{v}"),
                route: route.id.clone(),
                position: net.frame.to_geo(jittered),
                timestamp: t.round(),
            });
            t += rng.random_range(60.0..120.0);
        }
    }
    fixes
}

/// Steps a manual clock through the feed one second at a time, polling over
/// TCP and rendering buffered frames one second behind. Returns the raw
/// responses.
fn replay(net: &Arc<TransitNetwork>, fixes: Vec<VehicleFix>, frames: &mut usize) -> Result<Vec<String>, String> {
    let clock = Arc::new(ManualClock::new(0.0));
    let service = Arc::new(TransitService::new(net.clone(), clock.clone()));
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let handle = serve(service.clone(), listener, None).map_err(|e| e.to_string())?;
    let mut client = TransitClient::connect(handle.addr).map_err(|e| e.to_string())?;
    let mut feed = FeedReplay::new(fixes);
    let mut buffer = ClientBuffer::new(8);
    let mut responses = Vec::new();
    let mut fix_times: BTreeMap<String, f64> = BTreeMap::new();
    let mut last_arc: BTreeMap<String, f64> = BTreeMap::new();
    for s in 0..=REPLAY_S {
        let now = s as f64;
        clock.set(now);
        service.apply_fixes(feed.due(now));
        let raw = client.request(REQUEST).map_err(|e| e.to_string())?;
        let snap = parse_snapshot(&raw).and_then(|w| w.resolve(net)).map_err(|e| e.to_string())?;
        for e in snap.vehicles.iter().chain(&service.snapshot(None).vehicles) {
            let d = off_line(net, e)?;
            ensure!(d <= ON_LINE_TOL, "t = {s}: {} is {d:e} m off route {}", e.vehicle, e.route);
        }
        buffer.push(now, snap).map_err(|e| e.to_string())?;
        responses.push(raw);

        let state = service.state();
        let fresh: Vec<&String> =
            state.vehicles.iter().filter(|(id, v)| fix_times.get(*id) != Some(&v.last_fix_time)).map(|(id, _)| id).collect();
        for id in &fresh {
            last_arc.remove(*id);
        }
        if s > 0 {
            for f in 0..FRAMES_PER_S {
                let t = now - 1.0 + f as f64 / FRAMES_PER_S as f64;
                for e in buffer.interpolate(t, net).map_err(|e| e.to_string())? {
                    let d = off_line(net, &e)?;
                    ensure!(d <= ON_LINE_TOL, "frame {t:.3}: {} is {d:e} m off route {}", e.vehicle, e.route);
                    if fresh.contains(&&e.vehicle) {
                        continue;
                    }
                    if let Some(&prev) = last_arc.get(&e.vehicle) {
                        ensure!(e.arc >= prev, "frame {t:.3}: {} moved back from arc {prev} to {}", e.vehicle, e.arc);
                    }
                    last_arc.insert(e.vehicle.clone(), e.arc);
                    *frames += 1;
                }
            }
        }
        fix_times = state.vehicles.iter().map(|(id, v)| (id.clone(), v.last_fix_time)).collect();
    }
    ensure!(feed.is_done(), "feed not exhausted");
    drop(client);
    handle.shutdown();
    Ok(responses)
}

/// A writer flips every vehicle between the two routes in single batches
/// while clients poll; each snapshot must show one route and its
/// destination throughout.
fn atomicity(net: &Arc<TransitNetwork>) -> Outcome {
    let clock = Arc::new(ManualClock::new(0.0));
    let service = Arc::new(TransitService::new(net.clone(), clock.clone()));
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let handle = serve(service.clone(), listener, None).map_err(|e| e.to_string())?;
    let vehicles = 8;
    let batch = |k: usize| -> Vec<VehicleFix> {
        let route = if k % 2 == 0 { "A" } else { "B" };
        (0..vehicles)
            .map(|v| VehicleFix {
                vehicle: format!("v{v}"),
                route: route.into(),
                position: net.frame.to_geo(Point2D::new(10.0 + 30.0 * v as f64 + (k % 7) as f64, 0.0)),
                timestamp: k as f64,
            })
            .collect()
    };
    service.apply_fixes(&batch(0));
    let done = Arc::new(AtomicBool::new(false));
    let destinations: BTreeMap<String, String> = net.routes.values().map(|r| (r.id.clone(), r.destination.clone())).collect();
    let readers: Vec<_> = (0..CLIENTS)
        .map(|_| {
            let (done, destinations, addr) = (done.clone(), destinations.clone(), handle.addr);
            thread::spawn(move || -> Result<(usize, usize), String> {
                let mut client = TransitClient::connect(addr).map_err(|e| e.to_string())?;
                let (mut polls, mut flips, mut last) = (0, 0, String::new());
                while !done.load(Ordering::SeqCst) || polls == 0 {
                    let snap = client.snapshot(Rect::new(-1e6, -1e6, 1e6, 1e6)).map_err(|e| e.to_string())?;
                    ensure!(snap.vehicles.len() == vehicles, "snapshot with {} vehicles", snap.vehicles.len());
                    let route = snap.vehicles[0].route.clone();
                    for v in &snap.vehicles {
                        ensure!(v.route == route, "mixed routes {} and {} in one snapshot", route, v.route);
                        ensure!(destinations[&v.route] == v.destination, "{} on {} shows destination {}", v.id, v.route, v.destination);
                    }
                    flips += usize::from(!last.is_empty() && last != route);
                    last = route;
                    polls += 1;
                }
                Ok((polls, flips))
            })
        })
        .collect();
    // Paced so that polls interleave with the flips.
    for k in 1..=BATCHES {
        clock.set(k as f64);
        service.apply_fixes(&batch(k));
        thread::sleep(Duration::from_micros(500));
    }
    done.store(true, Ordering::SeqCst);
    let (mut polls, mut flips) = (0, 0);
    for r in readers {
        let (p, f) = r.join().map_err(|_| "client thread panicked".to_string())??;
        polls += p;
        flips += f;
    }
    handle.shutdown();
    let state = service.state();
    ensure!(state.applied == ((BATCHES + 1) * vehicles) as u64, "{} fixes applied, drops {:?}", state.applied, state.dropped);
    ensure!(flips > 0, "no client observed a route flip; polls never overlapped the writer");
    Ok(format!("{CLIENTS} clients, {polls} snapshots consistent across {BATCHES} route flips ({flips} flips seen)"))
}

pub fn run() -> Outcome {
    let net = Arc::new(load_network(NETWORK, None).map_err(|e| e.to_string())?);
    let mut rng = StdRng::seed_from_u64(0x7a45);
    let text = write_replay(&synthetic_feed(&net, &mut rng));
    let fixes = parse_replay(&text).map_err(|e| e.to_string())?;
    let mut frames = 0;
    let first = replay(&net, fixes.clone(), &mut frames)?;
    let second = replay(&net, fixes.clone(), &mut 0)?;
    ensure!(first == second, "two replays of the same feed diverge");
    let atomic = atomicity(&net)?;
    Ok(format!(
        "{} fixes over {REPLAY_S} s: {} polls and {frames} monotone frames on-polyline; replay deterministic; {atomic}",
        fixes.len(),
        first.len()
    ))
}
