//! Trip segmentation of a positioned trace.
//!
//! A static period is a run of consecutive observations in one postcode
//! spanning at least [`STATIC_SECONDS`]. Consecutive static periods in
//! different postcodes delimit a trip; consecutive static periods in the
//! same postcode do not.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::geometry::Point;
use super::{PositionEstimate, TelecomError, DAY, STATIC_SECONDS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub device: u32,
    pub origin: u32,
    pub destination: u32,
    /// Last observation of the origin's static period.
    pub depart_time: i64,
    /// First observation of the destination's static period.
    pub arrive_time: i64,
    /// Estimated positions while moving: the observations between the
    /// two static periods, extended into each period over positions held
    /// for less than [`MOVING_HOLD`].
    #[serde(skip)]
    pub path: Vec<Point>,
}

impl Trip {
    /// Calendar days (from the scenario start) the trip touches.
    pub fn days(&self) -> std::ops::RangeInclusive<i64> {
        self.depart_time.div_euclid(DAY)..=self.arrive_time.div_euclid(DAY)
    }
}

#[derive(Clone, Copy)]
struct Run {
    postcode: u32,
    first: usize,
    last: usize,
}

/// Positions held for less than this long count as movement when a trip
/// path is extended into its static periods.
pub const MOVING_HOLD: i64 = 300;

/// Start index of the streak of identical locations ending at `k`.
fn hold_start(trace: &[PositionEstimate], k: usize, floor: usize) -> usize {
    let mut j = k;
    while j > floor && trace[j - 1].location == trace[k].location {
        j -= 1;
    }
    j
}

fn hold_end(trace: &[PositionEstimate], k: usize, ceil: usize) -> usize {
    let mut j = k;
    while j < ceil && trace[j + 1].location == trace[k].location {
        j += 1;
    }
    j
}

fn movement(trace: &[PositionEstimate], from: Run, to: Run) -> Vec<Point> {
    let mut a = from.last;
    loop {
        let s = hold_start(trace, a, from.first);
        if trace[a].timestamp - trace[s].timestamp >= MOVING_HOLD {
            break;
        }
        if s == from.first {
            a = s;
            break;
        }
        a = s - 1;
    }
    let mut b = to.first;
    loop {
        let e = hold_end(trace, b, to.last);
        if trace[e].timestamp - trace[b].timestamp >= MOVING_HOLD {
            break;
        }
        if e == to.last {
            b = e;
            break;
        }
        b = e + 1;
    }
    trace[a..=b].iter().map(|e| e.location).collect()
}

/// Splits one device's time-ordered trace into trips.
pub fn extract_trips(trace: &[PositionEstimate]) -> Result<Vec<Trip>, TelecomError> {
    let mut trips = Vec::new();
    let Some(head) = trace.first() else { return Ok(trips) };
    let mut prev_static: Option<Run> = None;
    let mut run = Run { postcode: head.postcode, first: 0, last: 0 };

    let mut close = |run: Run, trips: &mut Vec<Trip>| {
        if trace[run.last].timestamp - trace[run.first].timestamp < STATIC_SECONDS {
            return;
        }
        if let Some(ps) = prev_static {
            if ps.postcode != run.postcode {
                trips.push(Trip {
                    device: head.device,
                    origin: ps.postcode,
                    destination: run.postcode,
                    depart_time: trace[ps.last].timestamp,
                    arrive_time: trace[run.first].timestamp,
                    path: movement(trace, ps, run),
                });
            }
        }
        prev_static = Some(run);
    };

    for (i, e) in trace.iter().enumerate().skip(1) {
        if e.device != head.device {
            return Err(TelecomError::MixedTrace(head.device, e.device));
        }
        if e.timestamp <= trace[i - 1].timestamp {
            return Err(TelecomError::UnorderedTrace { index: i });
        }
        if e.postcode == run.postcode {
            run.last = i;
        } else {
            close(run, &mut trips);
            run = Run { postcode: e.postcode, first: i, last: i };
        }
    }
    close(run, &mut trips);
    Ok(trips)
}

/// Per `(postcode, day)` trip counts: each trip adds one to its origin and
/// one to its destination on every day it touches.
pub fn postcode_day_counts(trips: &[Trip]) -> BTreeMap<(u32, i64), u64> {
    let mut out = BTreeMap::new();
    for t in trips {
        for day in t.days() {
            *out.entry((t.origin, day)).or_insert(0) += 1;
            *out.entry((t.destination, day)).or_insert(0) += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(t: i64, pc: u32) -> PositionEstimate {
        PositionEstimate { device: 1, timestamp: t, location: Point::new(pc as f64, 0.0), postcode: pc }
    }

    fn dwell(from: i64, minutes: i64, pc: u32) -> Vec<PositionEstimate> {
        (0..=minutes / 5).map(|k| obs(from + 300 * k, pc)).collect()
    }

    #[test]
    fn single_postcode_has_no_trips() {
        let tr = dwell(0, 600, 4);
        assert!(extract_trips(&tr).unwrap().is_empty());
    }

    #[test]
    fn dwell_move_dwell_is_one_trip_counted_twice() {
        let mut tr = dwell(0, 25, 1);
        tr.push(obs(1600, 9));
        tr.extend(dwell(2000, 30, 2));
        let trips = extract_trips(&tr).unwrap();
        assert_eq!(trips.len(), 1);
        let t = &trips[0];
        assert_eq!((t.origin, t.destination, t.depart_time, t.arrive_time), (1, 2, 1500, 2000));
        assert_eq!(t.path.len(), 3);
        let counts = postcode_day_counts(&trips);
        assert_eq!(counts.values().sum::<u64>(), 2);
        assert_eq!(counts[&(1, 0)], 1);
        assert_eq!(counts[&(2, 0)], 1);
    }

    #[test]
    fn midnight_trip_counts_on_both_days() {
        let mut tr = dwell(DAY - 3600, 50, 1); // until 23:50
        tr.extend(dwell(DAY + 1200, 40, 2)); // from 00:20
        let trips = extract_trips(&tr).unwrap();
        assert_eq!(trips.len(), 1);
        assert_eq!(trips[0].days(), 0..=1);
        let c = postcode_day_counts(&trips);
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn return_without_stop_is_no_trip() {
        let mut tr = dwell(0, 30, 1);
        tr.push(obs(2000, 2));
        tr.extend(dwell(2400, 30, 1));
        assert!(extract_trips(&tr).unwrap().is_empty());
    }

    #[test]
    fn unordered_and_mixed_traces_fail() {
        let tr = vec![obs(10, 1), obs(10, 1)];
        assert!(matches!(extract_trips(&tr), Err(TelecomError::UnorderedTrace { index: 1 })));
        let mut other = obs(20, 1);
        other.device = 2;
        assert!(matches!(extract_trips(&[obs(10, 1), other]), Err(TelecomError::MixedTrace(1, 2))));
    }
}
