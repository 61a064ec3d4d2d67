//! Ping simulation: each device follows a day plan of stays and routed
//! moves, and exchanges pings with the nearest covering antenna.

use std::path::Path;

use chrono::Datelike;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::Point;
use super::scenario::{route_mode, DeviceScript, Leg, Routine, Scenario};
use super::{Mode, Ping, Purpose, TelecomError, DAY};
use crate::inference::chain_rng;

/// A scripted movement between two anchor points, as simulated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueTrip {
    pub device: u32,
    pub origin: Point,
    pub destination: Point,
    pub origin_postcode: u32,
    pub destination_postcode: u32,
    pub depart: i64,
    pub arrive: i64,
    pub mode: Mode,
    pub purpose: Purpose,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DeviceSimulation {
    pub device: u32,
    pub pings: Vec<Ping>,
    /// True device location at each ping.
    pub true_positions: Vec<Point>,
    pub trips: Vec<TrueTrip>,
}

/// Pings of every device, ordered by device then time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PingLog {
    pub pings: Vec<Ping>,
    pub true_positions: Vec<Point>,
    pub trips: Vec<TrueTrip>,
}

impl PingLog {
    /// CSV with columns `device,timestamp,antenna`.
    pub fn write_csv(&self, path: &Path) -> Result<(), TelecomError> {
        let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
        for p in &self.pings {
            w.serialize(p).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Vec<Ping>, TelecomError> {
        let mut r = csv::Reader::from_path(path).map_err(csv_io)?;
        r.deserialize().collect::<Result<Vec<Ping>, _>>().map_err(csv_io)
    }
}

pub(crate) fn csv_io(e: csv::Error) -> TelecomError {
    TelecomError::Io(std::io::Error::other(e))
}

#[derive(Clone, Debug)]
enum Activity {
    Stay { at: Point, until: i64 },
    Move { legs: Vec<Leg>, depart: i64, arrive: i64 },
}

struct Planner<'a> {
    s: &'a Scenario,
    dev: &'a DeviceScript,
    home_pc: u32,
    work_pc: Option<u32>,
    at: Point,
    /// Time from which the device is free at `at`.
    free: i64,
    acts: Vec<Activity>,
    trips: Vec<TrueTrip>,
}

impl Planner<'_> {
    fn travel(&mut self, depart: i64, to: Point, mode: Option<Mode>) {
        let depart = depart.max(self.free + 1);
        self.acts.push(Activity::Stay { at: self.at, until: depart });
        let legs = match mode {
            Some(m) => self.s.route(self.at, to, m),
            None => self.s.fastest_route(self.at, to),
        };
        let secs: f64 = legs.iter().map(|l| l.line.length() / l.mode.speed()).sum();
        let arrive = depart + (secs.ceil() as i64).max(1);
        let (o, d) = (self.s.postcode_of(self.at), self.s.postcode_of(to));
        let commute = self.work_pc.is_some_and(|w| (o == self.home_pc && d == w) || (o == w && d == self.home_pc));
        self.trips.push(TrueTrip {
            device: self.dev.id,
            origin: self.at,
            destination: to,
            origin_postcode: o,
            destination_postcode: d,
            depart,
            arrive,
            mode: route_mode(&legs),
            purpose: if commute && o != d { Purpose::Commuting } else { Purpose::NonCommuting },
        });
        self.acts.push(Activity::Move { legs, depart, arrive });
        self.at = to;
        self.free = arrive;
    }

    fn outing(&mut self, depart: i64, to: Point, dwell: i64, mode: Option<Mode>) {
        self.travel(depart, to, mode);
        let back = self.free + dwell;
        self.travel(back, self.dev.home, mode);
    }
}

fn plan<R: Rng + ?Sized>(s: &Scenario, dev: &DeviceScript, rng: &mut R) -> (Vec<Activity>, Vec<TrueTrip>) {
    let home_pc = s.postcode_of(dev.home);
    let mut p = Planner {
        s,
        dev,
        home_pc,
        work_pc: dev.work.map(|w| s.postcode_of(w)),
        at: dev.home,
        free: 0,
        acts: Vec::new(),
        trips: Vec::new(),
    };
    let b = &s.config.behaviour;
    let gap = (b.home_gap_minutes * 60.0) as i64;
    let hour = 3600;
    let dwell = |rng: &mut R| (rng.random_range(b.min_dwell_minutes..=b.max_dwell_minutes) * 60.0) as i64;
    for day in 0..s.config.days {
        let base = day as i64 * DAY;
        let date = s.date_of(base);
        let weekday = date.weekday().num_days_from_monday() < 5;
        match dev.routine {
            Routine::Scripted => {
                for o in dev.outings.iter().filter(|o| o.day == day) {
                    if o.return_home {
                        p.outing(base + o.depart, o.to, o.dwell, o.mode);
                    } else {
                        p.travel(base + o.depart, o.to, o.mode);
                    }
                }
            }
            Routine::Commuter => {
                if let (Some(w), true) = (dev.work, weekday) {
                    p.travel(base + 7 * hour + 1800, w, dev.commute_mode);
                    p.travel(base + 17 * hour + 1800, dev.home, dev.commute_mode);
                }
            }
            Routine::Daily => {
                let m = s.multiplier(dev.canton, date);
                let mut commuted = false;
                if let (Some(w), true) = (dev.work, weekday) {
                    if rng.random::<f64>() < b.commute_probability * m {
                        let leave = base + 7 * hour + rng.random_range(0..5400);
                        p.travel(leave.max(p.free + gap), w, dev.commute_mode);
                        let back = base + 16 * hour + 1800 + rng.random_range(0..7200);
                        p.travel(back.max(p.free + gap), dev.home, dev.commute_mode);
                        commuted = true;
                    }
                }
                let rate = m * if weekday { b.weekday_outings } else { b.weekend_outings };
                let n = if rate > 0.0 { Poisson::new(rate).expect("positive rate").sample(rng) as usize } else { 0 };
                let (lo, hi) = if commuted { (18 * hour + 1800, 21 * hour + 1800) } else { (9 * hour, 21 * hour) };
                let mut departs: Vec<i64> = (0..n).map(|_| base + rng.random_range(lo..hi)).collect();
                departs.sort_unstable();
                for dep in departs {
                    let dep = dep.max(p.free + gap);
                    if dep > base + 22 * hour + 1800 {
                        break;
                    }
                    let pc = s.destination_postcode(dev.canton, home_pc, rng);
                    let to = s.random_anchor(pc, rng);
                    let d = dwell(rng);
                    p.outing(dep, to, d, None);
                }
                if rng.random::<f64>() < b.late_outing_probability * m {
                    let dep = base + 23 * hour + rng.random_range(0..2700);
                    if dep >= p.free + gap {
                        let pc = s.destination_postcode(dev.canton, home_pc, rng);
                        let to = s.random_anchor(pc, rng);
                        let d = rng.random_range(1800..4500);
                        p.outing(dep, to, d, None);
                    }
                }
            }
        }
    }
    let end = s.config.days as i64 * DAY;
    p.acts.push(Activity::Stay { at: p.at, until: end.max(p.free + 1) });
    (p.acts, p.trips)
}

fn position_on(legs: &[Leg], elapsed: f64) -> Point {
    let mut t = elapsed;
    for l in legs {
        let len = l.line.length();
        let dur = len / l.mode.speed();
        if t <= dur {
            return l.line.at(t * l.mode.speed());
        }
        t -= dur;
    }
    *legs.last().expect("route").line.points.last().expect("points")
}

/// Simulates one device with its own random stream.
pub fn simulate_device(scenario: &Scenario, device: usize, seed: u64) -> Result<DeviceSimulation, TelecomError> {
    let dev = scenario.devices.get(device).ok_or(TelecomError::EmptyScenario)?;
    let mut rng: ChaCha8Rng = chain_rng(seed, device);
    let (acts, trips) = plan(scenario, dev, &mut rng);
    let cfg = &scenario.config.positioning;
    let interval = cfg.stationary_interval.max(1);
    let jitter = cfg.stationary_jitter.clamp(0, interval - 1);
    let end = scenario.config.days as i64 * DAY;

    let mut out = DeviceSimulation { device: dev.id, ..Default::default() };
    let mut next = rng.random_range(0..interval);
    let mut last: Option<(i64, usize)> = None;
    let push = |out: &mut DeviceSimulation, last: &mut Option<(i64, usize)>, t: i64, ant: usize, at: Point| {
        if t >= end || last.is_some_and(|(lt, _)| t <= lt) {
            return;
        }
        out.pings.push(Ping { device: dev.id, timestamp: t, antenna: scenario.antennas[ant].id });
        out.true_positions.push(at);
        *last = Some((t, ant));
    };
    for act in &acts {
        match act {
            Activity::Stay { at, until } => {
                let (primary, second) = scenario.serving(*at)?;
                while next < *until {
                    let ant = match second {
                        Some(b) if rng.random::<f64>() < cfg.bounce_probability => b,
                        _ => primary,
                    };
                    push(&mut out, &mut last, next, ant, *at);
                    next += interval - rng.random_range(0..=jitter);
                }
            }
            Activity::Move { legs, depart, arrive } => {
                let step = cfg.moving_step.max(1);
                let mut t = *depart;
                while t < *arrive {
                    let p = position_on(legs, (t - depart) as f64);
                    let (ant, _) = scenario.serving(p)?;
                    let due = match last {
                        None => true,
                        Some((lt, la)) => la != ant || t - lt >= cfg.moving_interval,
                    };
                    if due {
                        push(&mut out, &mut last, t, ant, p);
                    }
                    t += step;
                }
                let lt = last.map_or(*arrive, |(lt, _)| lt);
                next = (lt + interval - rng.random_range(0..=jitter)).max(*arrive);
            }
        }
    }
    out.trips = trips;
    Ok(out)
}

/// Simulates every device; a pure function of `(scenario, seed)`.
pub fn simulate_pings(scenario: &Scenario, seed: u64) -> Result<PingLog, TelecomError> {
    let sims: Vec<DeviceSimulation> = (0..scenario.devices.len())
        .into_par_iter()
        .map(|d| simulate_device(scenario, d, seed))
        .collect::<Result<_, _>>()?;
    let mut log = PingLog::default();
    for s in sims {
        log.pings.extend(s.pings);
        log.true_positions.extend(s.true_positions);
        log.trips.extend(s.trips);
    }
    Ok(log)
}
