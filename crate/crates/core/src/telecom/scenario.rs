//! Scenario files: postcode cells, antennas, transport networks, device
//! routines and the mobility response to each policy measure.
//!
//! A scenario is either spelled out element by element or generated from a
//! `[grid]` section that lays the cantons out as squares with a regular
//! antenna raster, rail lines along canton rows and highways along canton
//! columns.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{BBox, BucketIndex, Point, Polygon, Polyline};
use super::positioning::{estimate_position, AngleModel, PositioningMode, RadiusModel};
use super::{Antenna, AntennaKind, Mode, Ping, PositionEstimate, TelecomError, DAY};
use crate::panel::{CantonId, Measure, PolicyRecord, PolicySchedule};
use crate::reference::{date, POPULATION};

const FIRST_WAVE: &str = include_str!("../../scenarios/first_wave.toml");
const VALIDATION: &str = include_str!("../../scenarios/validation.toml");

/// Names accepted by [`Scenario::bundled`].
pub const BUNDLED: [&str; 2] = ["first_wave", "validation"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Seed for the generated layout; ping simulation takes its own seed.
    pub seed: u64,
    pub start: NaiveDate,
    pub days: u32,
    /// Leading days of each trace used to derive home and work.
    pub profile_days: u32,
    pub positioning: PositioningConfig,
    pub behaviour: BehaviourConfig,
    pub policy_response: PolicyResponse,
    /// Policy start dates; the bundled timeline when absent.
    pub policies: Option<Vec<PolicyRecord>>,
    pub grid: Option<GridConfig>,
    pub postcodes: Vec<PostcodeConfig>,
    pub antennas: Vec<AntennaConfig>,
    pub networks: Vec<NetworkConfig>,
    pub devices: Vec<DeviceConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            seed: 1,
            start: date("2020-02-10"),
            days: 56,
            profile_days: 14,
            positioning: PositioningConfig::default(),
            behaviour: BehaviourConfig::default(),
            policy_response: PolicyResponse::default(),
            policies: None,
            grid: None,
            postcodes: Vec::new(),
            antennas: Vec::new(),
            networks: Vec::new(),
            devices: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PositioningConfig {
    pub radius: RadiusModel,
    pub angle: AngleModel,
    pub mode: PositioningMode,
    /// Chance that a stationary ping lands on the second-best antenna.
    pub bounce_probability: f64,
    /// Distance (m) within which a trip segment snaps to a network.
    pub snap_radius: f64,
    /// Nominal gap (s) between pings of a stationary device.
    pub stationary_interval: i64,
    /// Each stationary gap is shortened by up to this many seconds.
    pub stationary_jitter: i64,
    /// Time step (s) at which a moving device re-selects its antenna.
    pub moving_step: i64,
    /// Longest gap (s) between pings of a moving device.
    pub moving_interval: i64,
}

impl Default for PositioningConfig {
    fn default() -> Self {
        Self {
            radius: RadiusModel::default(),
            angle: AngleModel::default(),
            mode: PositioningMode::Point,
            bounce_probability: 0.02,
            snap_radius: 250.0,
            stationary_interval: 300,
            stationary_jitter: 60,
            moving_step: 2,
            moving_interval: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviourConfig {
    /// Share of generated devices with a workplace.
    pub worker_share: f64,
    /// Chance a worker commutes on a weekday before any measure.
    pub commute_probability: f64,
    /// Mean leisure outings per weekday and per weekend day.
    pub weekday_outings: f64,
    pub weekend_outings: f64,
    /// Chance of an outing that starts shortly before midnight.
    pub late_outing_probability: f64,
    /// Share of workplaces and outings in a neighbouring canton.
    pub cross_canton_share: f64,
    pub min_dwell_minutes: f64,
    pub max_dwell_minutes: f64,
    /// Minimum time (min) at home between outings.
    pub home_gap_minutes: f64,
    /// Anchor points keep this distance (m) from postcode boundaries.
    pub anchor_inset: f64,
    /// Time (s) a train or highway route must save to be preferred.
    pub transfer_seconds: f64,
}

impl Default for BehaviourConfig {
    fn default() -> Self {
        Self {
            worker_share: 0.7,
            commute_probability: 0.8,
            weekday_outings: 0.7,
            weekend_outings: 1.5,
            late_outing_probability: 0.05,
            cross_canton_share: 0.15,
            min_dwell_minutes: 25.0,
            max_dwell_minutes: 120.0,
            home_gap_minutes: 25.0,
            anchor_inset: 600.0,
            transfer_seconds: 120.0,
        }
    }
}

/// Multiplicative response of trip propensity to each active measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyResponse {
    pub ban100: f64,
    pub ban5: f64,
    pub school_closure: f64,
    pub venue_closure: f64,
    pub border_closure: f64,
}

impl Default for PolicyResponse {
    fn default() -> Self {
        Self { ban100: 1.0, ban5: 1.0, school_closure: 1.0, venue_closure: 1.0, border_closure: 1.0 }
    }
}

impl PolicyResponse {
    pub fn get(&self, m: Measure) -> f64 {
        match m {
            Measure::Ban100 => self.ban100,
            Measure::Ban5 => self.ban5,
            Measure::SchoolClosure => self.school_closure,
            Measure::VenueClosure => self.venue_closure,
            Measure::BorderClosure => self.border_closure,
        }
    }

    /// Product over the active measures.
    pub fn multiplier(&self, active: [bool; 5]) -> f64 {
        Measure::ALL.iter().filter(|m| active[m.index()]).map(|&m| self.get(m)).product()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Canton codes laid out row by row; all 26 when empty.
    pub cantons: Vec<String>,
    pub columns: usize,
    /// Side (m) of a canton square.
    pub canton_size: f64,
    pub postcodes_per_side: usize,
    pub antenna_spacing: f64,
    pub sectors: usize,
    pub devices_per_person: f64,
    pub min_devices: usize,
    /// Upper bound on devices per canton (0 = none).
    pub max_devices: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cantons: Vec::new(),
            columns: 6,
            canton_size: 4800.0,
            postcodes_per_side: 2,
            antenna_spacing: 300.0,
            sectors: 3,
            devices_per_person: 1.0 / 4000.0,
            min_devices: 40,
            max_devices: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostcodeConfig {
    pub id: String,
    #[serde(default)]
    pub canton: Option<String>,
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaConfig {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub azimuth_deg: f64,
    #[serde(default = "full_circle")]
    pub beam_width_deg: f64,
    #[serde(default = "lte")]
    pub kind: AntennaKind,
}

fn full_circle() -> f64 {
    360.0
}

fn lte() -> AntennaKind {
    AntennaKind::Lte
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub mode: Mode,
    pub points: Vec<[f64; 2]>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Routine {
    /// Random commutes and outings scaled by the policy response.
    #[default]
    Daily,
    /// Home to work at 07:30 and back at 17:30 on weekdays, nothing else.
    Commuter,
    /// Only the listed outings.
    Scripted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub home: [f64; 2],
    #[serde(default)]
    pub work: Option<[f64; 2]>,
    #[serde(default)]
    pub canton: Option<String>,
    #[serde(default)]
    pub commute_mode: Option<Mode>,
    #[serde(default)]
    pub routine: Routine,
    #[serde(default)]
    pub outings: Vec<OutingConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutingConfig {
    /// Day index from the scenario start.
    pub day: u32,
    /// Departure as `HH:MM`.
    pub depart: String,
    pub to: [f64; 2],
    pub dwell_minutes: f64,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default = "yes")]
    pub return_home: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq)]
pub struct Postcode {
    pub id: String,
    pub canton: Option<CantonId>,
    pub polygon: Polygon,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub mode: Mode,
    pub line: Polyline,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outing {
    pub day: u32,
    /// Seconds after midnight.
    pub depart: i64,
    pub to: Point,
    pub dwell: i64,
    pub mode: Option<Mode>,
    pub return_home: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviceScript {
    pub id: u32,
    pub home: Point,
    pub work: Option<Point>,
    pub canton: Option<CantonId>,
    pub commute_mode: Option<Mode>,
    pub routine: Routine,
    pub outings: Vec<Outing>,
}

/// One leg of a route, travelled at the speed of its mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Leg {
    pub mode: Mode,
    pub line: Polyline,
}

/// A validated scenario with spatial indexes.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub postcodes: Vec<Postcode>,
    pub antennas: Vec<Antenna>,
    pub networks: Vec<Network>,
    pub devices: Vec<DeviceScript>,
    pub schedule: PolicySchedule,
    pub bbox: BBox,
    antenna_ids: HashMap<u32, usize>,
    antenna_index: BucketIndex,
    postcode_index: BucketIndex,
    /// Point-estimate location and postcode per antenna.
    estimates: Vec<(Point, u32)>,
    by_canton: BTreeMap<Option<CantonId>, Vec<u32>>,
    neighbours: BTreeMap<CantonId, Vec<CantonId>>,
}

fn pt(a: [f64; 2]) -> Point {
    Point::new(a[0], a[1])
}

fn parse_hhmm(s: &str) -> Result<i64, TelecomError> {
    let bad = || TelecomError::InvalidScenario(format!("bad time `{s}`, expected HH:MM"));
    let (h, m) = s.trim().split_once(':').ok_or_else(bad)?;
    let (h, m): (i64, i64) = (h.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?);
    if !(0..24).contains(&h) || !(0..60).contains(&m) {
        return Err(bad());
    }
    Ok(h * 3600 + m * 60)
}

fn canton(code: &Option<String>) -> Result<Option<CantonId>, TelecomError> {
    code.as_deref()
        .map(|c| CantonId::parse(c).map_err(|e| TelecomError::InvalidScenario(e.to_string())))
        .transpose()
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, TelecomError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, TelecomError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn bundled(name: &str) -> Result<Self, TelecomError> {
        match name {
            "first_wave" | "first-wave" => Self::from_toml(FIRST_WAVE),
            "validation" => Self::from_toml(VALIDATION),
            _ => Err(TelecomError::InvalidScenario(format!(
                "no bundled scenario `{name}` (available: {})",
                BUNDLED.join(", ")
            ))),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

/// Layout produced by the grid generator.
struct GridLayout {
    postcodes: Vec<Postcode>,
    antennas: Vec<Antenna>,
    networks: Vec<Network>,
    cells: Vec<(CantonId, usize, usize)>,
}

fn grid_layout(g: &GridConfig) -> Result<GridLayout, TelecomError> {
    let invalid = |m: &str| Err(TelecomError::InvalidScenario(m.into()));
    if g.columns == 0 || g.postcodes_per_side == 0 || g.sectors == 0 {
        return invalid("grid columns, postcodes_per_side and sectors must be positive");
    }
    if !(g.canton_size > 0.0 && g.antenna_spacing > 0.0) {
        return invalid("grid sizes must be positive");
    }
    let codes: Vec<CantonId> = if g.cantons.is_empty() {
        CantonId::all().collect()
    } else {
        g.cantons.iter().map(|c| canton(&Some(c.clone())).map(|c| c.expect("some"))).collect::<Result<_, _>>()?
    };
    let s = g.canton_size;
    let cells: Vec<(CantonId, usize, usize)> =
        codes.iter().enumerate().map(|(j, &c)| (c, j % g.columns, j / g.columns)).collect();

    let p = g.postcodes_per_side;
    let side = s / p as f64;
    let mut postcodes = Vec::new();
    for (j, &(c, col, row)) in cells.iter().enumerate() {
        let (x0, y0) = (col as f64 * s, row as f64 * s);
        for k in 0..p * p {
            let (i, l) = (k % p, k / p);
            let (px, py) = (x0 + i as f64 * side, y0 + l as f64 * side);
            postcodes.push(Postcode {
                id: format!("{}", 1000 + 100 * j + k),
                canton: Some(c),
                polygon: Polygon::rect(px, py, px + side, py + side),
            });
        }
    }

    let n = (s / g.antenna_spacing).round() as usize;
    let mut antennas = Vec::new();
    let width = std::f64::consts::TAU / g.sectors as f64;
    for &(_, col, row) in &cells {
        let (x0, y0) = (col as f64 * s, row as f64 * s);
        // sites on the square's lower and left edges belong to it; the
        // upper and right edges only where no neighbour owns them
        let right = !cells.iter().any(|&(_, c2, r2)| c2 == col + 1 && r2 == row);
        let top = !cells.iter().any(|&(_, c2, r2)| c2 == col && r2 == row + 1);
        let top_right = !cells.iter().any(|&(_, c2, r2)| c2 == col + 1 && r2 == row + 1);
        for a in 0..=n {
            for b in 0..=n {
                let owned = match (a == n, b == n) {
                    (false, false) => true,
                    (true, false) => right,
                    (false, true) => top,
                    (true, true) => right && top && top_right,
                };
                if !owned {
                    continue;
                }
                let loc = Point::new(x0 + a as f64 * g.antenna_spacing, y0 + b as f64 * g.antenna_spacing);
                for sector in 0..g.sectors {
                    antennas.push(Antenna {
                        id: antennas.len() as u32,
                        location: loc,
                        azimuth: std::f64::consts::FRAC_PI_2 + sector as f64 * width,
                        beam_width: width,
                        kind: AntennaKind::Lte,
                    });
                }
            }
        }
    }

    let rows = cells.iter().map(|c| c.2).max().unwrap_or(0) + 1;
    let mut networks = Vec::new();
    for r in 0..rows {
        let cols: Vec<usize> = cells.iter().filter(|c| c.2 == r).map(|c| c.1).collect();
        let (lo, hi) = (*cols.iter().min().expect("row"), *cols.iter().max().expect("row"));
        let y = (r as f64 + 0.5) * s;
        networks.push(Network {
            mode: Mode::Train,
            line: Polyline { points: vec![Point::new(lo as f64 * s, y), Point::new((hi + 1) as f64 * s, y)] },
        });
    }
    for col in 0..g.columns {
        let rs: Vec<usize> = cells.iter().filter(|c| c.1 == col).map(|c| c.2).collect();
        if rs.is_empty() {
            continue;
        }
        let (lo, hi) = (*rs.iter().min().expect("col"), *rs.iter().max().expect("col"));
        let x = (col as f64 + 0.5) * s;
        networks.push(Network {
            mode: Mode::Highway,
            line: Polyline { points: vec![Point::new(x, lo as f64 * s), Point::new(x, (hi + 1) as f64 * s)] },
        });
    }
    Ok(GridLayout { postcodes, antennas, networks, cells })
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self, TelecomError> {
        let invalid = |m: String| Err(TelecomError::InvalidScenario(m));
        if config.days == 0 {
            return invalid("scenario must span at least one day".into());
        }
        let mut postcodes = Vec::new();
        let mut antennas = Vec::new();
        let mut networks = Vec::new();
        let mut neighbours: BTreeMap<CantonId, Vec<CantonId>> = BTreeMap::new();
        let mut grid_cells = Vec::new();
        if let Some(g) = &config.grid {
            let layout = grid_layout(g)?;
            postcodes = layout.postcodes;
            antennas = layout.antennas;
            networks = layout.networks;
            for &(c, col, row) in &layout.cells {
                let adj = layout
                    .cells
                    .iter()
                    .filter(|&&(_, c2, r2)| (c2 as i64 - col as i64).abs() + (r2 as i64 - row as i64).abs() == 1)
                    .map(|x| x.0)
                    .collect();
                neighbours.insert(c, adj);
            }
            grid_cells = layout.cells;
        }
        for pc in &config.postcodes {
            if pc.polygon.len() < 3 {
                return invalid(format!("postcode {} needs at least three vertices", pc.id));
            }
            postcodes.push(Postcode {
                id: pc.id.clone(),
                canton: canton(&pc.canton)?,
                polygon: Polygon { vertices: pc.polygon.iter().copied().map(pt).collect() },
            });
        }
        let first_explicit = antennas.len() as u32;
        for a in &config.antennas {
            if !(a.beam_width_deg > 0.0 && a.beam_width_deg <= 360.0) {
                return invalid(format!("antenna {}: beam width must lie in (0, 360] degrees", a.id));
            }
            antennas.push(Antenna {
                id: if config.grid.is_some() { first_explicit + a.id } else { a.id },
                location: Point::new(a.x, a.y),
                azimuth: a.azimuth_deg.to_radians(),
                beam_width: a.beam_width_deg.to_radians(),
                kind: a.kind,
            });
        }
        for n in &config.networks {
            if n.points.len() < 2 {
                return invalid("a network needs at least two points".into());
            }
            networks.push(Network { mode: n.mode, line: Polyline { points: n.points.iter().copied().map(pt).collect() } });
        }
        if postcodes.is_empty() {
            return invalid("no postcodes".into());
        }
        if antennas.is_empty() {
            return invalid("no antennas".into());
        }
        let mut antenna_ids = HashMap::with_capacity(antennas.len());
        for (i, a) in antennas.iter().enumerate() {
            if antenna_ids.insert(a.id, i).is_some() {
                return invalid(format!("duplicate antenna id {}", a.id));
            }
        }

        let schedule = match &config.policies {
            None => PolicySchedule::bundled(),
            Some(records) => {
                let mut s = PolicySchedule::new();
                for r in records {
                    let c = CantonId::parse(&r.canton).map_err(|e| TelecomError::InvalidScenario(e.to_string()))?;
                    let m: Measure = r.measure.parse().map_err(|e: crate::panel::PanelError| TelecomError::InvalidScenario(e.to_string()))?;
                    s.insert(c, m, r.start_date).map_err(|e| TelecomError::InvalidScenario(e.to_string()))?;
                }
                s
            }
        };

        let pc_boxes: Vec<BBox> = postcodes.iter().map(|p| p.polygon.bbox()).collect();
        let bbox = pc_boxes.iter().copied().reduce(BBox::union).expect("postcodes");
        let mean_side = pc_boxes.iter().map(|b| (b.max.x - b.min.x).max(b.max.y - b.min.y)).sum::<f64>() / pc_boxes.len() as f64;
        let postcode_index = BucketIndex::new(&pc_boxes, mean_side.max(1.0));
        let ant_boxes: Vec<BBox> = antennas.iter().map(|a| BBox::of(&[a.location])).collect();
        let all_ant = ant_boxes.iter().copied().reduce(BBox::union).expect("antennas");
        let area = ((all_ant.max.x - all_ant.min.x) * (all_ant.max.y - all_ant.min.y)).max(1.0);
        let sites = antennas.len() as f64 / config.grid.as_ref().map_or(1.0, |g| g.sectors as f64);
        let cell = (area / sites).sqrt().max(50.0);
        let antenna_index = BucketIndex::new(&ant_boxes, cell);

        let mut by_canton: BTreeMap<Option<CantonId>, Vec<u32>> = BTreeMap::new();
        for (i, p) in postcodes.iter().enumerate() {
            by_canton.entry(p.canton).or_default().push(i as u32);
        }

        let mut scenario = Scenario {
            config,
            postcodes,
            antennas,
            networks,
            devices: Vec::new(),
            schedule,
            bbox,
            antenna_ids,
            antenna_index,
            postcode_index,
            estimates: Vec::new(),
            by_canton,
            neighbours,
        };
        let pos = &scenario.config.positioning;
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        scenario.estimates = scenario
            .antennas
            .iter()
            .map(|a| {
                let p = scenario.bbox.clamp(estimate_position(a, &pos.radius, &pos.angle, PositioningMode::Point, &mut unused));
                (p, scenario.postcode_of(p))
            })
            .collect();

        let mut devices = Vec::new();
        if let Some(g) = scenario.config.grid.clone() {
            devices = scenario.grid_devices(&g, &grid_cells);
        }
        for d in &scenario.config.devices {
            let home = pt(d.home);
            let canton = match canton(&d.canton)? {
                Some(c) => Some(c),
                None => scenario.postcodes[scenario.postcode_of(home) as usize].canton,
            };
            let outings = d
                .outings
                .iter()
                .map(|o| {
                    Ok(Outing {
                        day: o.day,
                        depart: parse_hhmm(&o.depart)?,
                        to: pt(o.to),
                        dwell: (o.dwell_minutes * 60.0).round() as i64,
                        mode: o.mode,
                        return_home: o.return_home,
                    })
                })
                .collect::<Result<Vec<_>, TelecomError>>()?;
            devices.push(DeviceScript {
                id: devices.len() as u32,
                home,
                work: d.work.map(pt),
                canton,
                commute_mode: d.commute_mode,
                routine: d.routine,
                outings,
            });
        }
        if devices.is_empty() {
            return Err(TelecomError::EmptyScenario);
        }
        scenario.devices = devices;
        Ok(scenario)
    }

    pub fn from_toml(text: &str) -> Result<Self, TelecomError> {
        Self::from_config(ScenarioConfig::from_toml(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, TelecomError> {
        Self::from_config(ScenarioConfig::load(path)?)
    }

    pub fn bundled(name: &str) -> Result<Self, TelecomError> {
        Self::from_config(ScenarioConfig::bundled(name)?)
    }

    fn grid_devices(&self, g: &GridConfig, cells: &[(CantonId, usize, usize)]) -> Vec<DeviceScript> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let b = &self.config.behaviour;
        let population: BTreeMap<&str, u64> = POPULATION.iter().copied().collect();
        let mut out = Vec::new();
        for &(c, _, _) in cells {
            let pop = population.get(c.code()).copied().unwrap_or(0) as f64;
            let mut n = ((pop * g.devices_per_person).round() as usize).max(g.min_devices);
            if g.max_devices > 0 {
                n = n.min(g.max_devices);
            }
            let own = &self.by_canton[&Some(c)];
            for _ in 0..n {
                let home_pc = *own.choose(&mut rng).expect("canton has postcodes");
                let home = self.random_anchor(home_pc, &mut rng);
                let work = if rng.random::<f64>() < b.worker_share {
                    let pc = self.destination_postcode(Some(c), home_pc, &mut rng);
                    Some(self.random_anchor(pc, &mut rng))
                } else {
                    None
                };
                out.push(DeviceScript {
                    id: out.len() as u32,
                    home,
                    work,
                    canton: Some(c),
                    commute_mode: None,
                    routine: Routine::Daily,
                    outings: Vec::new(),
                });
            }
        }
        out
    }

    /// A postcode other than `home_pc`: in the home canton, or with the
    /// configured share in a neighbouring canton.
    pub(crate) fn destination_postcode<R: Rng + ?Sized>(&self, canton: Option<CantonId>, home_pc: u32, rng: &mut R) -> u32 {
        let nb = canton.and_then(|c| self.neighbours.get(&c)).filter(|n| !n.is_empty());
        if let Some(nb) = nb {
            if rng.random::<f64>() < self.config.behaviour.cross_canton_share {
                let c = *nb.choose(rng).expect("non-empty");
                return *self.by_canton[&Some(c)].choose(rng).expect("postcodes");
            }
        }
        let own = &self.by_canton[&canton];
        let others: Vec<u32> = own.iter().copied().filter(|&p| p != home_pc).collect();
        let pool = if others.is_empty() {
            // single-postcode canton: anywhere else
            (0..self.postcodes.len() as u32).filter(|&p| p != home_pc).collect()
        } else {
            others
        };
        pool.choose(rng).copied().unwrap_or(home_pc)
    }

    /// A uniform point of the postcode at least the anchor inset away from
    /// its boundary, or the centroid when the cell is too small.
    pub fn random_anchor<R: Rng + ?Sized>(&self, postcode: u32, rng: &mut R) -> Point {
        let poly = &self.postcodes[postcode as usize].polygon;
        let b = poly.bbox();
        let inset = self.config.behaviour.anchor_inset;
        for _ in 0..64 {
            let p = Point::new(rng.random_range(b.min.x..=b.max.x), rng.random_range(b.min.y..=b.max.y));
            if poly.contains(p) && poly.boundary_distance(p) >= inset {
                return p;
            }
        }
        poly.centroid()
    }

    pub fn antenna(&self, id: u32) -> Result<&Antenna, TelecomError> {
        self.antenna_ids.get(&id).map(|&i| &self.antennas[i]).ok_or(TelecomError::UnknownAntenna(id))
    }

    /// Postcode containing `p`; outside every polygon, the one with the
    /// nearest centroid.
    pub fn postcode_of(&self, p: Point) -> u32 {
        if let Some(&i) = self.postcode_index.at(p).iter().find(|&&i| self.postcodes[i].polygon.contains(p)) {
            return i as u32;
        }
        let mut best = (f64::INFINITY, 0);
        for (i, pc) in self.postcodes.iter().enumerate() {
            let d = pc.polygon.centroid().dist(p);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1 as u32
    }

    pub fn postcode_canton(&self, postcode: u32) -> Result<CantonId, TelecomError> {
        let pc = &self.postcodes[postcode as usize];
        pc.canton.ok_or_else(|| TelecomError::UnmappedPostcode(pc.id.clone()))
    }

    /// The nearest and second-nearest antennas whose beams cover `p`, as
    /// indices into `antennas`.
    pub fn serving(&self, p: Point) -> Result<(usize, Option<usize>), TelecomError> {
        let mut best: [(f64, usize); 2] = [(f64::INFINITY, usize::MAX); 2];
        let cell = self.antenna_index.cell();
        for r in 0..=self.antenna_index.max_ring() {
            for i in self.antenna_index.ring(p, r) {
                let a = &self.antennas[i];
                if !a.covers(p) {
                    continue;
                }
                let d = a.location.dist(p);
                if d < best[0].0 || (d == best[0].0 && i < best[0].1) {
                    best[1] = best[0];
                    best[0] = (d, i);
                } else if d < best[1].0 || (d == best[1].0 && i < best[1].1) {
                    best[1] = (d, i);
                }
            }
            if best[1].0 <= r as f64 * cell {
                break;
            }
        }
        if best[0].1 == usize::MAX {
            return Err(TelecomError::NoCoverage { x: p.x, y: p.y });
        }
        Ok((best[0].1, (best[1].1 != usize::MAX).then_some(best[1].1)))
    }

    /// Position of a ping under the scenario's models.
    pub fn position<R: Rng + ?Sized>(&self, ping: &Ping, mode: PositioningMode, rng: &mut R) -> Result<PositionEstimate, TelecomError> {
        let &i = self.antenna_ids.get(&ping.antenna).ok_or(TelecomError::UnknownAntenna(ping.antenna))?;
        let (location, postcode) = match mode {
            PositioningMode::Point => self.estimates[i],
            PositioningMode::Sample => {
                let pos = &self.config.positioning;
                let p = self.bbox.clamp(estimate_position(&self.antennas[i], &pos.radius, &pos.angle, mode, rng));
                (p, self.postcode_of(p))
            }
        };
        Ok(PositionEstimate { device: ping.device, timestamp: ping.timestamp, location, postcode })
    }

    pub fn date_of(&self, t: i64) -> NaiveDate {
        self.config.start + Duration::days(t.div_euclid(DAY))
    }

    pub fn end_date(&self) -> NaiveDate {
        self.config.start + Duration::days(self.config.days as i64 - 1)
    }

    /// Trip propensity multiplier for a canton on a date.
    pub fn multiplier(&self, canton: Option<CantonId>, on: NaiveDate) -> f64 {
        match canton {
            Some(c) => self.config.policy_response.multiplier(self.schedule.dummies(c, on)),
            None => 1.0,
        }
    }

    /// Route from `a` to `b`: Manhattan road legs, or road access and
    /// egress around a leg on the nearest network of the requested mode.
    pub fn route(&self, a: Point, b: Point, mode: Mode) -> Vec<Leg> {
        let road = |from: Point, to: Point| -> Vec<Leg> {
            let corner = Point::new(to.x, from.y);
            let mut pts = vec![from];
            if corner != from && corner != to {
                pts.push(corner);
            }
            pts.push(to);
            vec![Leg { mode: Mode::Road, line: Polyline { points: pts } }]
        };
        if mode == Mode::Road {
            return road(a, b);
        }
        let best = self
            .networks
            .iter()
            .filter(|n| n.mode == mode)
            .map(|n| {
                let (da, sa) = n.line.project(a);
                let (db, sb) = n.line.project(b);
                (da + db, n, sa, sb)
            })
            .min_by(|x, y| x.0.total_cmp(&y.0));
        let Some((_, net, sa, sb)) = best else { return road(a, b) };
        let (pa, pb) = (net.line.at(sa), net.line.at(sb));
        let mut legs = Vec::new();
        if pa != a {
            legs.push(Leg { mode: Mode::Road, line: Polyline { points: vec![a, pa] } });
        }
        if (sa - sb).abs() > 0.0 {
            legs.push(Leg { mode, line: Polyline { points: net.line.between(sa, sb) } });
        }
        if pb != b {
            legs.push(Leg { mode: Mode::Road, line: Polyline { points: vec![pb, b] } });
        }
        if legs.is_empty() {
            return road(a, b);
        }
        legs
    }

    /// Fastest route; network routes must beat the road by the transfer time.
    pub fn fastest_route(&self, a: Point, b: Point) -> Vec<Leg> {
        let time = |legs: &[Leg]| legs.iter().map(|l| l.line.length() / l.mode.speed()).sum::<f64>();
        let mut best = self.route(a, b, Mode::Road);
        let mut best_t = time(&best);
        for m in [Mode::Train, Mode::Highway] {
            let r = self.route(a, b, m);
            if !r.iter().any(|l| l.mode == m) {
                continue;
            }
            let t = time(&r) + self.config.behaviour.transfer_seconds;
            if t < best_t {
                best_t = t;
                best = r;
            }
        }
        best
    }

    /// Postcode → canton table for aggregation.
    pub fn postcode_cantons(&self) -> Vec<(String, Option<CantonId>)> {
        self.postcodes.iter().map(|p| (p.id.clone(), p.canton)).collect()
    }
}

/// Mode that covers the longest distance over a route's legs, ties going
/// to train, then highway.
pub fn route_mode(legs: &[Leg]) -> Mode {
    let mut len = [0.0; 3];
    for l in legs {
        len[Mode::ALL.iter().position(|&m| m == l.mode).expect("mode")] += l.line.length();
    }
    let mut best = 0;
    for i in 1..3 {
        if len[i] > len[best] {
            best = i;
        }
    }
    Mode::ALL[best]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ScenarioConfig {
        ScenarioConfig::from_toml(
            r#"
name = "tiny"
days = 7
[[postcodes]]
id = "A"
canton = "ZH"
polygon = [[0, 0], [1000, 0], [1000, 1000], [0, 1000]]
[[postcodes]]
id = "B"
canton = "ZH"
polygon = [[1000, 0], [2000, 0], [2000, 1000], [1000, 1000]]
[[antennas]]
id = 7
x = 500
y = 500
[[antennas]]
id = 9
x = 1500
y = 500
[[devices]]
home = [400, 400]
routine = "scripted"
"#,
        )
        .unwrap()
    }

    #[test]
    fn explicit_scenario_resolves() {
        let s = Scenario::from_config(tiny()).unwrap();
        assert_eq!(s.postcode_of(Point::new(1200.0, 10.0)), 1);
        let (a, b) = s.serving(Point::new(1400.0, 500.0)).unwrap();
        assert_eq!(s.antennas[a].id, 9);
        assert_eq!(s.antennas[b.unwrap()].id, 7);
        assert_eq!(s.devices[0].canton, Some(CantonId::parse("ZH").unwrap()));
        assert!(matches!(s.antenna(3), Err(TelecomError::UnknownAntenna(3))));
    }

    #[test]
    fn empty_device_list_is_rejected() {
        let mut c = tiny();
        c.devices.clear();
        assert!(matches!(Scenario::from_config(c), Err(TelecomError::EmptyScenario)));
    }

    #[test]
    fn grid_layout_covers_every_canton() {
        let cfg = ScenarioConfig {
            grid: Some(GridConfig { cantons: vec!["ZH".into(), "AG".into(), "BE".into()], columns: 2, ..GridConfig::default() }),
            ..ScenarioConfig::default()
        };
        let s = Scenario::from_config(cfg).unwrap();
        assert_eq!(s.postcodes.len(), 12);
        assert_eq!(s.networks.iter().filter(|n| n.mode == Mode::Train).count(), 2);
        assert_eq!(s.networks.iter().filter(|n| n.mode == Mode::Highway).count(), 2);
        // every location in the region has coverage
        for x in [10.0, 2400.0, 9500.0] {
            for y in [5.0, 4790.0, 9000.0] {
                let p = Point::new(x, y);
                if s.bbox.contains(p) && s.postcodes.iter().any(|q| q.polygon.contains(p)) {
                    assert!(s.serving(p).is_ok());
                }
            }
        }
        assert!(s.devices.iter().all(|d| d.canton.is_some()));
    }

    #[test]
    fn hhmm_parsing() {
        assert_eq!(parse_hhmm("07:30").unwrap(), 27000);
        assert!(parse_hhmm("24:00").is_err());
    }

    #[test]
    fn route_mode_prefers_longest_total() {
        let s = Scenario::from_config(tiny()).unwrap();
        let legs = s.route(Point::new(0.0, 0.0), Point::new(600.0, 200.0), Mode::Road);
        assert_eq!(route_mode(&legs), Mode::Road);
        assert!((legs[0].line.length() - 800.0).abs() < 1e-9);
    }
}
