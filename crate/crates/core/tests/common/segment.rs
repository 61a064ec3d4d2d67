//! Reference trip segmenter written for clarity rather than speed: split
//! the trace into maximal single-postcode runs, keep the long ones, pair
//! neighbours.

use std::collections::BTreeMap;

use rand::Rng;
use swissmob::telecom::{Point, PositionEstimate, DAY, STATIC_SECONDS};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefTrip {
    pub origin: u32,
    pub destination: u32,
    pub depart: i64,
    pub arrive: i64,
}

pub fn segment(trace: &[PositionEstimate]) -> Vec<RefTrip> {
    // (postcode, first timestamp, last timestamp)
    let mut runs: Vec<(u32, i64, i64)> = Vec::new();
    for e in trace {
        match runs.last_mut() {
            Some(r) if r.0 == e.postcode => r.2 = e.timestamp,
            _ => runs.push((e.postcode, e.timestamp, e.timestamp)),
        }
    }
    let statics: Vec<_> = runs.into_iter().filter(|r| r.2 - r.1 >= STATIC_SECONDS).collect();
    statics
        .windows(2)
        .filter(|w| w[0].0 != w[1].0)
        .map(|w| RefTrip { origin: w[0].0, destination: w[1].0, depart: w[0].2, arrive: w[1].1 })
        .collect()
}

pub fn counts(trips: &[RefTrip]) -> BTreeMap<(u32, i64), u64> {
    let mut out = BTreeMap::new();
    for t in trips {
        let mut day = t.depart.div_euclid(DAY);
        while day <= t.arrive.div_euclid(DAY) {
            for pc in [t.origin, t.destination] {
                *out.entry((pc, day)).or_default() += 1;
            }
            day += 1;
        }
    }
    out
}

/// Up to 200 observations over a few postcodes: sticky postcodes, short
/// gaps, and occasional long gaps that often cross midnight.
pub fn random_trace(rng: &mut impl Rng) -> Vec<PositionEstimate> {
    let n = rng.random_range(0..=200);
    let postcodes = rng.random_range(1..=4u32);
    let mut t = rng.random_range(0..2 * DAY);
    let mut pc = rng.random_range(0..postcodes);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.random::<f64>() < 0.15 {
            pc = rng.random_range(0..postcodes);
        }
        out.push(PositionEstimate { device: 3, timestamp: t, location: Point::new(pc as f64, 0.0), postcode: pc });
        t += if rng.random::<f64>() < 0.05 { rng.random_range(1000..40_000) } else { rng.random_range(1..600) };
    }
    out
}
