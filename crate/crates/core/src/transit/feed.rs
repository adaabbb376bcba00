use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use super::{TransitError, VehicleFix};
use crate::geom::GeoPoint;

/// Feed clock in seconds. Readings never decrease.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

/// Clock advanced by hand; used for deterministic replays.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(t: f64) -> Self {
        ManualClock(AtomicU64::new(t.to_bits()))
    }

    /// Moves the clock to `t`; earlier times are ignored.
    pub fn set(&self, t: f64) {
        let mut cur = self.0.load(Ordering::Acquire);
        while f64::from_bits(cur) < t {
            match self.0.compare_exchange(cur, t.to_bits(), Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) => return,
                Err(seen) => cur = seen,
            }
        }
    }
}

impl Clock for ManualClock {
    fn now(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Acquire))
    }
}

/// Wall clock mapped onto feed time: `start + elapsed * speed`.
#[derive(Debug)]
pub struct ReplayClock {
    started: Instant,
    start: f64,
    speed: f64,
}

impl ReplayClock {
    pub fn new(start: f64, speed: f64) -> Self {
        ReplayClock { started: Instant::now(), start, speed: speed.max(0.0) }
    }
}

impl Clock for ReplayClock {
    fn now(&self) -> f64 {
        self.start + self.started.elapsed().as_secs_f64() * self.speed
    }
}

/// Parses a replay file: one fix per line, `t vehicle route lat lon`.
/// Blank lines and `#` comments are skipped. Fixes are returned sorted by
/// time; equal times keep file order.
pub fn parse_replay(text: &str) -> Result<Vec<VehicleFix>, TransitError> {
    let mut fixes = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| TransitError::Parse { line: n + 1, msg };
        let f: Vec<&str> = line.split_whitespace().collect();
        let [t, vehicle, route, lat, lon] = f[..] else {
            return Err(err(format!("expected 5 fields, found {}", f.len())));
        };
        let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| err(format!("bad number {s}")));
        fixes.push(VehicleFix {
            vehicle: vehicle.to_string(),
            route: route.to_string(),
            position: GeoPoint::new(num(lat)?, num(lon)?).map_err(|e| err(e.to_string()))?,
            timestamp: num(t)?,
        });
    }
    fixes.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(fixes)
}

pub fn write_replay(fixes: &[VehicleFix]) -> String {
    fixes.iter().map(|f| format!("{} {} {} {:.7} {:.7}\n", f.timestamp, f.vehicle, f.route, f.position.lat, f.position.lon)).collect()
}

/// Cursor over a recorded feed.
#[derive(Debug, Clone)]
pub struct FeedReplay {
    fixes: Vec<VehicleFix>,
    next: usize,
}

impl FeedReplay {
    pub fn new(mut fixes: Vec<VehicleFix>) -> Self {
        fixes.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        FeedReplay { fixes, next: 0 }
    }

    /// Fixes with timestamps ≤ `t` not yet handed out.
    pub fn due(&mut self, t: f64) -> &[VehicleFix] {
        let start = self.next;
        while self.next < self.fixes.len() && self.fixes[self.next].timestamp <= t {
            self.next += 1;
        }
        &self.fixes[start..self.next]
    }

    pub fn is_done(&self) -> bool {
        self.next == self.fixes.len()
    }

    pub fn first_time(&self) -> Option<f64> {
        self.fixes.first().map(|f| f.timestamp)
    }

    pub fn last_time(&self) -> Option<f64> {
        self.fixes.last().map(|f| f.timestamp)
    }
}
