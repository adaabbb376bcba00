use std::collections::{BTreeMap, VecDeque};

use super::{Snapshot, SnapshotEntry, TransitError, TransitNetwork};

/// Interpolated vehicle position for one rendered frame.
pub type FramePosition = SnapshotEntry;

/// Ring of received snapshots keyed by client receive time.
#[derive(Debug, Clone)]
pub struct ClientBuffer {
    capacity: usize,
    entries: VecDeque<(f64, Snapshot)>,
}

impl ClientBuffer {
    /// Capacities below 2 are raised to 2.
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(2);
        ClientBuffer { capacity, entries: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends a snapshot; the oldest is evicted when full.
    pub fn push(&mut self, received: f64, snapshot: Snapshot) -> Result<(), TransitError> {
        if let Some(&(last, _)) = self.entries.back() {
            if !(received > last) {
                return Err(TransitError::OutOfOrder { time: received, last });
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((received, snapshot));
        Ok(())
    }

    /// Per-vehicle positions at client time `t`, interpolated linearly in arc
    /// length between the bracketing snapshots. Outside the buffered span the
    /// nearest snapshot is held.
    pub fn interpolate(&self, t: f64, net: &TransitNetwork) -> Result<Vec<FramePosition>, TransitError> {
        let (first_t, first) = self.entries.front().ok_or(TransitError::EmptyBuffer)?;
        let (last_t, last) = self.entries.back().expect("non-empty");
        if t <= *first_t {
            return Ok(first.vehicles.clone());
        }
        if t >= *last_t {
            return Ok(last.vehicles.clone());
        }
        let i = self.entries.partition_point(|(rt, _)| *rt <= t) - 1;
        let (t0, s0) = &self.entries[i];
        let (t1, s1) = &self.entries[i + 1];
        let w = (t - t0) / (t1 - t0);
        let later: BTreeMap<&str, &SnapshotEntry> = s1.vehicles.iter().map(|v| (v.vehicle.as_str(), v)).collect();
        let mut out = Vec::with_capacity(s0.vehicles.len());
        for a in &s0.vehicles {
            match later.get(a.vehicle.as_str()) {
                Some(b) if b.route == a.route => {
                    let route = net.route(&a.route)?;
                    let arc = a.arc + (b.arc - a.arc) * w;
                    let (position, heading) = route.point_at(arc);
                    out.push(SnapshotEntry { arc, position, heading, ..a.clone() });
                }
                _ => out.push(a.clone()),
            }
        }
        Ok(out)
    }
}
