//! Mode and purpose labels for extracted trips.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::scenario::Network;
use super::trips::Trip;
use super::{Mode, PositionEstimate, Purpose, TelecomError, DAY};

/// Days of history needed before home and work can be derived.
pub const MIN_HISTORY_DAYS: u32 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomeWorkProfile {
    pub device: u32,
    pub home: u32,
    pub work: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledTrip {
    pub device: u32,
    pub origin: u32,
    pub destination: u32,
    pub depart_time: i64,
    pub arrive_time: i64,
    pub mode: Mode,
    pub purpose: Purpose,
}

impl LabeledTrip {
    pub fn days(&self) -> std::ops::RangeInclusive<i64> {
        self.depart_time.div_euclid(DAY)..=self.arrive_time.div_euclid(DAY)
    }
}

/// Labels each inter-observation segment by the nearest network within
/// `snap_radius` of its midpoint (road when none is that close) and
/// returns the label with the greatest total length. Ties go to train,
/// then highway.
pub fn classify_mode(trip: &Trip, networks: &[Network], snap_radius: f64) -> Mode {
    let mut len = [0.0f64; 3];
    for w in trip.path.windows(2) {
        let mid = w[0].lerp(w[1], 0.5);
        let mut label = Mode::Road;
        let mut best = snap_radius;
        for n in networks {
            let d = n.line.distance(mid);
            if d <= best {
                // equal distances keep the earlier network
                if d < best || label == Mode::Road {
                    label = n.mode;
                }
                best = d;
            }
        }
        len[slot(label)] += w[0].dist(w[1]);
    }
    let mut pick = 0;
    for i in 1..3 {
        if len[i] > len[pick] {
            pick = i;
        }
    }
    Mode::ALL[pick]
}

fn slot(m: Mode) -> usize {
    Mode::ALL.iter().position(|&x| x == m).expect("mode")
}

/// Longest time one observation can stand for when weighting by dwell.
pub const MAX_OBSERVATION_WEIGHT: i64 = 3600;

/// Home is the modal postcode of observations between 20:00 and 08:00,
/// work the modal postcode between 08:00 and 17:00. Observations are
/// weighted by the time until the next one (at most an hour), so the dense
/// pings of a moving device do not outweigh hours spent in one place. Ties
/// go to the postcode observed first in the window. A window without
/// observations falls back to the whole trace.
pub fn derive_home_work(trace: &[PositionEstimate]) -> Result<HomeWorkProfile, TelecomError> {
    let (Some(first), Some(last)) = (trace.first(), trace.last()) else {
        return Err(TelecomError::InsufficientHistory { needed: MIN_HISTORY_DAYS, got: 0 });
    };
    let days = (last.timestamp.div_euclid(DAY) - first.timestamp.div_euclid(DAY) + 1) as u32;
    if days < MIN_HISTORY_DAYS {
        return Err(TelecomError::InsufficientHistory { needed: MIN_HISTORY_DAYS, got: days });
    }
    let weight = |i: usize| -> i64 {
        trace.get(i + 1).map_or(1, |n| (n.timestamp - trace[i].timestamp).clamp(1, MAX_OBSERVATION_WEIGHT))
    };
    let modal = |keep: &dyn Fn(i64) -> bool| -> Option<u32> {
        // postcode -> (weight, first index)
        let mut tally: HashMap<u32, (i64, usize)> = HashMap::new();
        for (i, e) in trace.iter().enumerate() {
            if keep(e.timestamp.rem_euclid(DAY)) {
                tally.entry(e.postcode).or_insert((0, i)).0 += weight(i);
            }
        }
        tally.into_iter().max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1))).map(|(pc, _)| pc)
    };
    let all = modal(&|_| true).expect("non-empty trace");
    let home = modal(&|s| s >= 20 * 3600 || s < 8 * 3600).unwrap_or(all);
    let work = modal(&|s| (8 * 3600..17 * 3600).contains(&s)).unwrap_or(all);
    Ok(HomeWorkProfile { device: first.device, home, work })
}

/// Commuting when the trip joins home and work in either direction.
pub fn classify_purpose(trip: &Trip, profile: &HomeWorkProfile) -> Purpose {
    let (a, b) = (trip.origin, trip.destination);
    if (a == profile.home && b == profile.work) || (a == profile.work && b == profile.home) {
        Purpose::Commuting
    } else {
        Purpose::NonCommuting
    }
}

pub fn label_trips(trips: &[Trip], profile: &HomeWorkProfile, networks: &[Network], snap_radius: f64) -> Vec<LabeledTrip> {
    trips
        .iter()
        .map(|t| LabeledTrip {
            device: t.device,
            origin: t.origin,
            destination: t.destination,
            depart_time: t.depart_time,
            arrive_time: t.arrive_time,
            mode: classify_mode(t, networks, snap_radius),
            purpose: classify_purpose(t, profile),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telecom::geometry::{Point, Polyline};

    fn trip(points: &[(f64, f64)]) -> Trip {
        Trip {
            device: 0,
            origin: 1,
            destination: 2,
            depart_time: 0,
            arrive_time: 60,
            path: points.iter().map(|&(x, y)| Point::new(x, y)).collect(),
        }
    }

    fn nets() -> Vec<Network> {
        vec![
            Network { mode: Mode::Train, line: Polyline { points: vec![Point::new(0.0, 0.0), Point::new(20000.0, 0.0)] } },
            Network { mode: Mode::Highway, line: Polyline { points: vec![Point::new(0.0, 5000.0), Point::new(20000.0, 5000.0)] } },
        ]
    }

    #[test]
    fn longest_leg_wins() {
        let rail = trip(&[(0.0, 50.0), (3000.0, 50.0), (6000.0, -40.0)]);
        assert_eq!(classify_mode(&rail, &nets(), 250.0), Mode::Train);
        // 6 km on the highway, 2 km off any network
        let hw = trip(&[(0.0, 5000.0), (6000.0, 5000.0), (6000.0, 7000.0)]);
        assert_eq!(classify_mode(&hw, &nets(), 250.0), Mode::Highway);
        let tie = trip(&[(0.0, 0.0), (1000.0, 0.0), (1000.0, 1000.0)]);
        assert_eq!(classify_mode(&tie, &nets(), 250.0), Mode::Train);
    }

    #[test]
    fn purpose_is_unordered() {
        let p = HomeWorkProfile { device: 0, home: 1, work: 2 };
        let mut t = trip(&[(0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(classify_purpose(&t, &p), Purpose::Commuting);
        std::mem::swap(&mut t.origin, &mut t.destination);
        assert_eq!(classify_purpose(&t, &p), Purpose::Commuting);
        t.destination = 7;
        assert_eq!(classify_purpose(&t, &p), Purpose::NonCommuting);
    }

    #[test]
    fn always_in_one_postcode_gives_home_equal_work() {
        let tr: Vec<PositionEstimate> = (0..8 * 24)
            .map(|h| PositionEstimate { device: 3, timestamp: h * 3600, location: Point::default(), postcode: 5 })
            .collect();
        let p = derive_home_work(&tr).unwrap();
        assert_eq!((p.home, p.work), (5, 5));
        assert!(matches!(
            derive_home_work(&tr[..24 * 3]),
            Err(TelecomError::InsufficientHistory { needed: 7, got: 3 })
        ));
    }

    #[test]
    fn night_shift_worker_is_misread_by_clock_windows() {
        // at the workplace 21:00-05:00, home otherwise
        let tr: Vec<PositionEstimate> = (0..10 * 24)
            .map(|h| {
                let hour = h % 24;
                let pc = if !(5..21).contains(&hour) { 2 } else { 1 };
                PositionEstimate { device: 0, timestamp: h * 3600, location: Point::default(), postcode: pc }
            })
            .collect();
        let p = derive_home_work(&tr).unwrap();
        assert_eq!((p.home, p.work), (2, 1));
    }
}
