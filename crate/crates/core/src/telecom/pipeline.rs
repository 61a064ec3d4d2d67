//! End-to-end pipeline: simulate, position, segment, label, aggregate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::labels::{derive_home_work, label_trips, HomeWorkProfile, LabeledTrip};
use super::positioning::suppress_bouncing;
use super::scenario::Scenario;
use super::simulate::{csv_io, simulate_device, DeviceSimulation, PingLog};
use super::trips::extract_trips;
use super::{Mode, PositionEstimate, Purpose, TelecomError, DAY};
use crate::inference::chain_rng;
use crate::panel::{CantonId, CaseRecord, MobilityVar, PanelTables, PolicyRecord, PopulationRecord, TestRecord, TripCountRecord};
use crate::reference::{FIRST_CASE, POPULATION};

/// Width (m) of the bins of the positioning-error histogram.
const ERROR_BIN: f64 = 1.0;
const ERROR_BINS: usize = 20_000;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub devices: usize,
    pub pings: usize,
    pub trips: usize,
    pub true_trips: usize,
    /// Share of detected trips per mode and per purpose.
    pub mode_shares: BTreeMap<String, f64>,
    pub purpose_shares: BTreeMap<String, f64>,
    /// Detected trips matched to a simulated trip, and how many of those
    /// carry the simulated mode.
    pub matched_trips: usize,
    pub mode_accuracy: f64,
    pub purpose_accuracy: f64,
    /// Median distance (m) between estimated and true ping locations.
    pub median_position_error: f64,
    /// Devices whose home and work postcodes were recovered.
    pub home_work_recovered: f64,
}

#[derive(Clone, Debug, Default)]
pub struct PipelineOutput {
    pub records: Vec<TripCountRecord>,
    pub trips: Vec<LabeledTrip>,
    pub profiles: Vec<HomeWorkProfile>,
    /// Present only when requested; the log of a large scenario is big.
    pub pings: Option<PingLog>,
    pub summary: PipelineSummary,
}

struct DeviceResult {
    trips: Vec<LabeledTrip>,
    profile: HomeWorkProfile,
    pings: usize,
    true_trips: usize,
    matched: usize,
    mode_ok: usize,
    purpose_ok: usize,
    home_work_ok: bool,
    errors: Vec<u32>,
    sim: Option<DeviceSimulation>,
}

/// Positions a device's pings after bouncing suppression.
pub fn position_trace(scenario: &Scenario, sim: &DeviceSimulation, seed: u64) -> Result<Vec<PositionEstimate>, TelecomError> {
    let mode = scenario.config.positioning.mode;
    let mut rng = chain_rng(seed ^ 0x5eed_0f_9051_7104, sim.device as usize);
    suppress_bouncing(&sim.pings).iter().map(|p| scenario.position(p, mode, &mut rng)).collect()
}

fn process(scenario: &Scenario, device: usize, seed: u64, keep: bool) -> Result<DeviceResult, TelecomError> {
    let sim = simulate_device(scenario, device, seed)?;
    let trace = position_trace(scenario, &sim, seed)?;
    let mut errors = vec![0u32; ERROR_BINS];
    for (e, truth) in trace.iter().zip(&sim.true_positions) {
        let bin = ((e.location.dist(*truth) / ERROR_BIN) as usize).min(ERROR_BINS - 1);
        errors[bin] += 1;
    }
    let trips = extract_trips(&trace)?;
    let horizon = scenario.config.profile_days as i64 * DAY;
    let history = trace.partition_point(|e| e.timestamp < horizon);
    let profile = derive_home_work(&trace[..history])?;
    let pos = &scenario.config.positioning;
    let labeled = label_trips(&trips, &profile, &scenario.networks, pos.snap_radius);

    let (mut matched, mut mode_ok, mut purpose_ok) = (0, 0, 0);
    for t in &labeled {
        let best = sim
            .trips
            .iter()
            .map(|tt| (tt.arrive.min(t.arrive_time) - tt.depart.max(t.depart_time), tt))
            .filter(|(overlap, _)| *overlap >= 0)
            .max_by_key(|(overlap, _)| *overlap);
        if let Some((_, tt)) = best {
            matched += 1;
            mode_ok += usize::from(tt.mode == t.mode);
            purpose_ok += usize::from(tt.purpose == t.purpose);
        }
    }
    let dev = &scenario.devices[device];
    let home = scenario.postcode_of(dev.home);
    let work = dev.work.map_or(home, |w| scenario.postcode_of(w));
    Ok(DeviceResult {
        home_work_ok: profile.home == home && profile.work == work,
        trips: labeled,
        profile,
        pings: sim.pings.len(),
        true_trips: sim.trips.len(),
        matched,
        mode_ok,
        purpose_ok,
        errors,
        sim: keep.then_some(sim),
    })
}

/// Runs the whole telecom pipeline; a pure function of `(scenario, seed)`.
pub fn run_pipeline(scenario: &Scenario, seed: u64, keep_pings: bool) -> Result<PipelineOutput, TelecomError> {
    let results: Vec<DeviceResult> = (0..scenario.devices.len())
        .into_par_iter()
        .map(|d| process(scenario, d, seed, keep_pings))
        .collect::<Result<_, _>>()?;

    let mut out = PipelineOutput::default();
    let mut errors = vec![0u64; ERROR_BINS];
    let (mut matched, mut mode_ok, mut purpose_ok, mut hw_ok) = (0, 0, 0, 0);
    let mut log = PingLog::default();
    for r in results {
        out.summary.pings += r.pings;
        out.summary.true_trips += r.true_trips;
        matched += r.matched;
        mode_ok += r.mode_ok;
        purpose_ok += r.purpose_ok;
        hw_ok += usize::from(r.home_work_ok);
        for (a, b) in errors.iter_mut().zip(&r.errors) {
            *a += *b as u64;
        }
        out.trips.extend(r.trips);
        out.profiles.push(r.profile);
        if let Some(sim) = r.sim {
            log.pings.extend(sim.pings);
            log.true_positions.extend(sim.true_positions);
            log.trips.extend(sim.trips);
        }
    }
    if keep_pings {
        out.pings = Some(log);
    }
    out.records = aggregate(&out.trips, &scenario.postcode_cantons(), scenario.config.start, scenario.config.days)?;

    let s = &mut out.summary;
    s.devices = scenario.devices.len();
    s.trips = out.trips.len();
    let n = s.trips.max(1) as f64;
    for m in Mode::ALL {
        s.mode_shares.insert(m.name().into(), out.trips.iter().filter(|t| t.mode == m).count() as f64 / n);
    }
    for p in [Purpose::Commuting, Purpose::NonCommuting] {
        s.purpose_shares.insert(p.name().into(), out.trips.iter().filter(|t| t.purpose == p).count() as f64 / n);
    }
    s.matched_trips = matched;
    s.mode_accuracy = mode_ok as f64 / matched.max(1) as f64;
    s.purpose_accuracy = purpose_ok as f64 / matched.max(1) as f64;
    s.home_work_recovered = hw_ok as f64 / s.devices.max(1) as f64;
    s.median_position_error = histogram_median(&errors) * ERROR_BIN;
    Ok(out)
}

fn histogram_median(h: &[u64]) -> f64 {
    let total: u64 = h.iter().sum();
    let mut acc = 0;
    for (i, c) in h.iter().enumerate() {
        acc += c;
        if 2 * acc >= total {
            return i as f64 + 0.5;
        }
    }
    f64::NAN
}

fn variables(t: &LabeledTrip) -> [MobilityVar; 3] {
    let mode = match t.mode {
        Mode::Train => MobilityVar::Train,
        Mode::Highway => MobilityVar::Highway,
        Mode::Road => MobilityVar::Road,
    };
    let purpose = match t.purpose {
        Purpose::Commuting => MobilityVar::Commuter,
        Purpose::NonCommuting => MobilityVar::NonCommuter,
    };
    [MobilityVar::Total, mode, purpose]
}

/// Canton-day counts per variable. A trip adds one in each distinct canton
/// of its endpoints on each day it touches, so a trip within one canton
/// counts once there and a trip across a border once on each side. Every
/// mapped canton gets a row per day and variable, zeros included.
pub fn aggregate(
    trips: &[LabeledTrip],
    postcode_cantons: &[(String, Option<CantonId>)],
    start: NaiveDate,
    days: u32,
) -> Result<Vec<TripCountRecord>, TelecomError> {
    let canton_of = |pc: u32| -> Result<CantonId, TelecomError> {
        let (id, c) = postcode_cantons
            .get(pc as usize)
            .ok_or_else(|| TelecomError::UnmappedPostcode(pc.to_string()))?;
        c.ok_or_else(|| TelecomError::UnmappedPostcode(id.clone()))
    };
    let mut counts: BTreeMap<(CantonId, i64), [i64; 6]> = BTreeMap::new();
    for t in trips {
        let a = canton_of(t.origin)?;
        let b = canton_of(t.destination)?;
        let cantons: &[CantonId] = if a == b { &[a] } else { &[a, b] };
        for day in t.days() {
            if !(0..days as i64).contains(&day) {
                continue;
            }
            for &c in cantons {
                let row = counts.entry((c, day)).or_insert([0; 6]);
                for k in variables(t) {
                    row[k.index()] += 1;
                }
            }
        }
    }
    let mut cantons: Vec<CantonId> = postcode_cantons.iter().filter_map(|(_, c)| *c).collect();
    cantons.sort();
    cantons.dedup();
    let mut out = Vec::with_capacity(cantons.len() * days as usize * 6);
    for c in cantons {
        for day in 0..days as i64 {
            let row = counts.get(&(c, day)).copied().unwrap_or([0; 6]);
            for k in MobilityVar::ALL {
                out.push(TripCountRecord {
                    canton: c.code().into(),
                    date: start + Duration::days(day),
                    variable: k.name().into(),
                    count: row[k.index()],
                });
            }
        }
    }
    Ok(out)
}

/// Relative drop of total trips (summed over cantons) between two weeks
/// starting on the given dates.
pub fn weekly_reduction(records: &[TripCountRecord], baseline: NaiveDate, post: NaiveDate) -> f64 {
    let week = |from: NaiveDate| -> f64 {
        records
            .iter()
            .filter(|r| r.variable == "total" && r.date >= from && r.date < from + Duration::days(7))
            .map(|r| r.count as f64)
            .sum()
    };
    1.0 - week(post) / week(baseline)
}

/// The first and last weeks of the mobility window: no measure is active
/// anywhere in the first, every measure everywhere in the last.
pub fn comparison_weeks() -> (NaiveDate, NaiveDate) {
    let (start, end) = crate::reference::mobility_window();
    (start, end - Duration::days(6))
}

/// [`weekly_reduction`] between the [`comparison_weeks`].
pub fn policy_reduction(records: &[TripCountRecord]) -> f64 {
    let (baseline, post) = comparison_weeks();
    weekly_reduction(records, baseline, post)
}

impl PipelineOutput {
    /// The five panel tables: trip counts from the pipeline, policies from
    /// the scenario, bundled populations and first-case dates, and smooth
    /// synthetic case and test series.
    pub fn tables(&self, scenario: &Scenario) -> PanelTables {
        let cantons: Vec<String> = {
            let mut v: Vec<String> = self.records.iter().map(|r| r.canton.clone()).collect();
            v.dedup();
            v
        };
        let pop: BTreeMap<&str, u64> = POPULATION.iter().copied().collect();
        let first: BTreeMap<&str, &str> = FIRST_CASE.iter().copied().collect();
        let (start, days) = (scenario.config.start, scenario.config.days as i64);
        let mut cases = Vec::new();
        for c in &cantons {
            let p = pop.get(c.as_str()).copied().unwrap_or(100_000) as f64;
            let f = first.get(c.as_str()).map_or(start, |d| crate::reference::date(d));
            for i in 0..days {
                let d = start + Duration::days(i);
                let since = (d - f).num_days();
                let cum = if since < 0 { 0 } else { (p / 1e5 * (0.18 * since as f64).exp()).round().max(1.0) as i64 };
                cases.push(CaseRecord { canton: c.clone(), date: d, cumulative_cases: cum });
            }
        }
        let policies = scenario
            .schedule
            .entries()
            .filter(|(c, _, _)| cantons.iter().any(|x| x == c.code()))
            .map(|(c, m, s)| PolicyRecord { canton: c.code().into(), measure: m.name().into(), start_date: s })
            .collect();
        let population = cantons
            .iter()
            .map(|c| PopulationRecord { canton: c.clone(), population: pop.get(c.as_str()).copied().unwrap_or(100_000) as f64 })
            .collect();
        let tests = (0..days)
            .map(|i| TestRecord { date: start + Duration::days(i), national_tests: (200.0 * (0.08 * i as f64).exp()).round() })
            .collect();
        PanelTables { trips: self.records.clone(), cases, policies, population, tests: Some(tests) }
    }

    /// Writes the panel tables, the per-trip audit file and (when kept)
    /// the ping log into `dir`; returns the written paths.
    pub fn write(&self, scenario: &Scenario, dir: &Path) -> Result<Vec<PathBuf>, TelecomError> {
        std::fs::create_dir_all(dir)?;
        let t = self.tables(scenario);
        let mut written = Vec::new();
        let mut put = |name: &str, f: &dyn Fn(&Path) -> Result<(), csv::Error>| -> Result<(), TelecomError> {
            let p = dir.join(name);
            f(&p).map_err(csv_io)?;
            written.push(p);
            Ok(())
        };
        put("trips.csv", &|p| write_rows(p, &t.trips))?;
        put("cases.csv", &|p| write_rows(p, &t.cases))?;
        put("policies.csv", &|p| write_rows(p, &t.policies))?;
        put("population.csv", &|p| write_rows(p, &t.population))?;
        put("tests.csv", &|p| write_rows(p, t.tests.as_deref().unwrap_or(&[])))?;
        put("trip_audit.csv", &|p| write_rows(p, &self.trips))?;
        if let Some(log) = &self.pings {
            let p = dir.join("pings.csv");
            log.write_csv(&p)?;
            written.push(p);
        }
        Ok(written)
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
