//! Canton-day panel construction.
//!
//! Raw CSV tables (trip counts, cumulative cases, policy start dates,
//! population, national tests) are validated and turned into an immutable
//! [`PanelDataset`] carrying every derived control used by the models:
//! weekday, policy dummies, days since first case, Mundlak time averages,
//! and the population offset.

mod load;
mod schedule;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reference::CANTON_CODES;

pub use load::{load_panel, LoadOptions, PanelSources, PanelTables};
pub use load::{CaseRecord, PolicyRecord, PopulationRecord, TestRecord, TripCountRecord};
pub use schedule::{policy_dummies, PolicySchedule};

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("unknown canton code `{0}`")]
    UnknownCanton(String),
    #[error("canton {0} is missing from the population table")]
    MissingCanton(CantonId),
    #[error("negative count in {table}: {detail}")]
    NegativeCount { table: &'static str, detail: String },
    #[error("cumulative cases decrease for {canton} on {date} ({previous} -> {current})")]
    NonMonotoneCumulativeCases {
        canton: CantonId,
        date: NaiveDate,
        previous: u64,
        current: u64,
    },
    #[error("conflicting start dates for {canton}/{measure}: {first} vs {second}")]
    ScheduleConflict {
        canton: CantonId,
        measure: Measure,
        first: NaiveDate,
        second: NaiveDate,
    },
    #[error("unknown policy measure `{0}`")]
    UnknownMeasure(String),
    #[error("unknown mobility variable `{0}`")]
    UnknownVariable(String),
    #[error("national test count is zero or negative on {0}")]
    ZeroNationalTests(NaiveDate),
    #[error("lag {lag} for {canton} on {date} falls before the trip data begins")]
    InsufficientHistory {
        canton: CantonId,
        date: NaiveDate,
        lag: u32,
    },
    #[error("zero {variable} trip count for {canton} on {date}; log undefined")]
    ZeroCount {
        canton: CantonId,
        date: NaiveDate,
        variable: MobilityVar,
    },
    #[error("lag {0} outside the supported range 7..=13")]
    InvalidLag(u32),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One of the 26 cantons; stored as an index into [`CANTON_CODES`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CantonId(u8);

impl CantonId {
    pub fn parse(code: &str) -> Result<Self, PanelError> {
        let code = code.trim();
        CANTON_CODES
            .iter()
            .position(|c| c.eq_ignore_ascii_case(code))
            .map(|i| CantonId(i as u8))
            .ok_or_else(|| PanelError::UnknownCanton(code.to_string()))
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < CANTON_CODES.len(), "canton index out of range");
        CantonId(i as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn code(self) -> &'static str {
        CANTON_CODES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = CantonId> {
        (0..CANTON_CODES.len()).map(CantonId::from_index)
    }
}

impl fmt::Display for CantonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for CantonId {
    type Err = PanelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CantonId::parse(s)
    }
}

impl Serialize for CantonId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for CantonId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        CantonId::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Policy measures, in the order used for `beta[1..5]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Ban100,
    Ban5,
    SchoolClosure,
    VenueClosure,
    BorderClosure,
}

impl Measure {
    pub const ALL: [Measure; 5] = [
        Measure::Ban100,
        Measure::Ban5,
        Measure::SchoolClosure,
        Measure::VenueClosure,
        Measure::BorderClosure,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Measure::Ban100 => "ban100",
            Measure::Ban5 => "ban5",
            Measure::SchoolClosure => "school_closure",
            Measure::VenueClosure => "venue_closure",
            Measure::BorderClosure => "border_closure",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Measure::Ban100 => "Ban on gatherings > 100",
            Measure::Ban5 => "Ban on gatherings > 5",
            Measure::SchoolClosure => "School closures",
            Measure::VenueClosure => "Venue closures",
            Measure::BorderClosure => "Border closures",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = PanelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Measure::ALL
            .into_iter()
            .find(|m| m.name() == norm || m.name().replace('_', "") == norm)
            .ok_or_else(|| PanelError::UnknownMeasure(s.to_string()))
    }
}

/// Mobility variables `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MobilityVar {
    Total,
    Train,
    Road,
    Highway,
    Commuter,
    #[serde(rename = "noncommuter")]
    NonCommuter,
}

impl MobilityVar {
    pub const ALL: [MobilityVar; 6] = [
        MobilityVar::Total,
        MobilityVar::Train,
        MobilityVar::Road,
        MobilityVar::Highway,
        MobilityVar::Commuter,
        MobilityVar::NonCommuter,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MobilityVar::Total => "total",
            MobilityVar::Train => "train",
            MobilityVar::Road => "road",
            MobilityVar::Highway => "highway",
            MobilityVar::Commuter => "commuter",
            MobilityVar::NonCommuter => "noncommuter",
        }
    }
}

impl fmt::Display for MobilityVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MobilityVar {
    type Err = PanelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        MobilityVar::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| PanelError::UnknownVariable(s.to_string()))
    }
}

/// Weekday index with Monday = 0.
pub fn weekday_index(w: Weekday) -> usize {
    w.num_days_from_monday() as usize
}

pub const WEEKDAY_LABELS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

/// One canton-day observation.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelRow {
    pub canton: CantonId,
    pub date: NaiveDate,
    pub weekday: Weekday,
    /// Trip counts indexed by [`MobilityVar::index`].
    pub mobility: [u64; 6],
    pub new_cases: u64,
    pub cumulative_cases: u64,
    /// Policy dummies indexed by [`Measure::index`].
    pub policy: [bool; 5],
    pub q: u32,
    pub z: u32,
    pub log_population: f64,
    pub est_tests: Option<f64>,
}

impl PanelRow {
    pub fn trips(&self, k: MobilityVar) -> u64 {
        self.mobility[k.index()]
    }

    pub fn log_z(&self) -> f64 {
        (self.z as f64).ln()
    }

    pub fn weekday_index(&self) -> usize {
        weekday_index(self.weekday)
    }
}

/// `q = max(0, t - t'_i)` and `z = q + 1`. Without a first case, `q = 0`.
pub fn days_since_first_case(first_case: Option<NaiveDate>, date: NaiveDate) -> (u32, u32) {
    let q = match first_case {
        Some(first) if date > first => (date - first).num_days() as u32,
        _ => 0,
    };
    (q, q + 1)
}

/// First date with a positive cumulative count in a `(date, cumulative)` series.
pub fn first_case_date(series: &[(NaiveDate, u64)]) -> Option<NaiveDate> {
    series.iter().filter(|(_, c)| *c > 0).map(|(d, _)| *d).min()
}

/// `û_it = u_t * E_i / sum_j E_j` for every canton in `populations`.
pub fn estimate_tests(
    national: &[(NaiveDate, f64)],
    populations: &BTreeMap<CantonId, f64>,
) -> Result<BTreeMap<(CantonId, NaiveDate), f64>, PanelError> {
    let total: f64 = populations.values().sum();
    let mut out = BTreeMap::new();
    for &(date, u) in national {
        if !(u > 0.0) {
            return Err(PanelError::ZeroNationalTests(date));
        }
        for (&canton, &pop) in populations {
            out.insert((canton, date), u * pop / total);
        }
    }
    Ok(out)
}

/// Log trip counts lagged by `s` days, aligned to the cases-model rows.
#[derive(Clone, Debug)]
pub struct LaggedMobility {
    pub variable: MobilityVar,
    pub lag: u32,
    /// `log m_{i,t-s,k}` per cases row, in [`PanelDataset::cases_rows`] order.
    pub values: Vec<f64>,
    /// Per-canton time average of `values`.
    pub canton_means: BTreeMap<CantonId, f64>,
}

/// The immutable canton-day panel.
#[derive(Clone, Debug)]
pub struct PanelDataset {
    rows: Vec<PanelRow>,
    cantons: Vec<CantonId>,
    dates: Vec<NaiveDate>,
    populations: BTreeMap<CantonId, f64>,
    first_case: BTreeMap<CantonId, NaiveDate>,
    schedule: PolicySchedule,
    mobility_window: (NaiveDate, NaiveDate),
    cases_window_end: NaiveDate,
    mundlak_z_mobility: BTreeMap<CantonId, f64>,
    mundlak_z_cases: BTreeMap<CantonId, f64>,
    mundlak_m: BTreeMap<(CantonId, MobilityVar, u32), f64>,
    warnings: Vec<String>,
}

impl PanelDataset {
    pub fn rows(&self) -> &[PanelRow] {
        &self.rows
    }

    pub fn cantons(&self) -> &[CantonId] {
        &self.cantons
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn populations(&self) -> &BTreeMap<CantonId, f64> {
        &self.populations
    }

    pub fn first_case(&self, canton: CantonId) -> Option<NaiveDate> {
        self.first_case.get(&canton).copied()
    }

    pub fn schedule(&self) -> &PolicySchedule {
        &self.schedule
    }

    pub fn mobility_window(&self) -> (NaiveDate, NaiveDate) {
        self.mobility_window
    }

    pub fn cases_window_end(&self) -> NaiveDate {
        self.cases_window_end
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Position of a canton in [`Self::cantons`].
    pub fn canton_position(&self, canton: CantonId) -> Option<usize> {
        self.cantons.iter().position(|&c| c == canton)
    }

    pub fn row(&self, canton: CantonId, date: NaiveDate) -> Option<&PanelRow> {
        let ci = self.canton_position(canton)?;
        let first = *self.dates.first()?;
        if date < first {
            return None;
        }
        let di = (date - first).num_days() as usize;
        if di >= self.dates.len() {
            return None;
        }
        self.rows.get(ci * self.dates.len() + di)
    }

    /// Rows inside the mobility-model window (balanced).
    pub fn mobility_rows(&self) -> impl Iterator<Item = &PanelRow> {
        let (start, end) = self.mobility_window;
        self.rows
            .iter()
            .filter(move |r| r.date >= start && r.date <= end)
    }

    /// Rows of the cases model: each canton from its first reported case to
    /// the end of the window (unbalanced).
    pub fn cases_rows(&self) -> impl Iterator<Item = &PanelRow> {
        let end = self.cases_window_end;
        self.rows.iter().filter(move |r| match self.first_case.get(&r.canton) {
            Some(&first) => r.date >= first && r.date <= end,
            None => false,
        })
    }

    pub fn mundlak_z_mobility(&self) -> &BTreeMap<CantonId, f64> {
        &self.mundlak_z_mobility
    }

    pub fn mundlak_z_cases(&self) -> &BTreeMap<CantonId, f64> {
        &self.mundlak_z_cases
    }

    /// Cached time average of `log m_{i,t-s,k}` over the cases window, when
    /// every lagged count exists and is positive.
    pub fn mundlak_m(&self, canton: CantonId, k: MobilityVar, s: u32) -> Option<f64> {
        self.mundlak_m.get(&(canton, k, s)).copied()
    }

    /// `log m_{i,t-s,k}` aligned to [`Self::cases_rows`].
    pub fn lagged_mobility(&self, k: MobilityVar, s: u32) -> Result<LaggedMobility, PanelError> {
        if !crate::reference::LAGS.contains(&s) {
            return Err(PanelError::InvalidLag(s));
        }
        let mut values = Vec::new();
        let mut sums: BTreeMap<CantonId, (f64, usize)> = BTreeMap::new();
        for row in self.cases_rows() {
            let v = self.lagged_log_count(row.canton, row.date, k, s)?;
            values.push(v);
            let e = sums.entry(row.canton).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
        let canton_means = sums
            .into_iter()
            .map(|(c, (s, n))| (c, s / n as f64))
            .collect();
        Ok(LaggedMobility {
            variable: k,
            lag: s,
            values,
            canton_means,
        })
    }

    /// `log m_{i,date-s,k}` for a single canton-date.
    pub fn lagged_log_count(
        &self,
        canton: CantonId,
        date: NaiveDate,
        k: MobilityVar,
        s: u32,
    ) -> Result<f64, PanelError> {
        let lagged = date - chrono::Duration::days(s as i64);
        let row = self
            .row(canton, lagged)
            .ok_or(PanelError::InsufficientHistory {
                canton,
                date,
                lag: s,
            })?;
        let m = row.trips(k);
        if m == 0 {
            return Err(PanelError::ZeroCount {
                canton,
                date: lagged,
                variable: k,
            });
        }
        Ok((m as f64).ln())
    }

    /// Mean of `log z` over the given rows, per canton.
    pub fn mean_log_z<'a>(rows: impl Iterator<Item = &'a PanelRow>) -> BTreeMap<CantonId, f64> {
        let mut sums: BTreeMap<CantonId, (f64, usize)> = BTreeMap::new();
        for r in rows {
            let e = sums.entry(r.canton).or_insert((0.0, 0));
            e.0 += r.log_z();
            e.1 += 1;
        }
        sums.into_iter()
            .map(|(c, (s, n))| (c, s / n as f64))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::date;

    #[test]
    fn canton_codes_round_trip() {
        for c in CantonId::all() {
            assert_eq!(CantonId::parse(c.code()).unwrap(), c);
        }
        assert!(matches!(
            CantonId::parse("XX"),
            Err(PanelError::UnknownCanton(_))
        ));
        assert_eq!(CantonId::parse("zh").unwrap().code(), "ZH");
    }

    #[test]
    fn measure_and_variable_parsing() {
        assert_eq!("ban100".parse::<Measure>().unwrap(), Measure::Ban100);
        assert_eq!("School-Closure".parse::<Measure>().unwrap(), Measure::SchoolClosure);
        assert_eq!("noncommuter".parse::<MobilityVar>().unwrap(), MobilityVar::NonCommuter);
        assert!("bus".parse::<MobilityVar>().is_err());
    }

    #[test]
    fn days_since_first_case_piecewise() {
        let first = Some(date("2020-02-25"));
        assert_eq!(days_since_first_case(first, date("2020-02-20")), (0, 1));
        assert_eq!(days_since_first_case(first, date("2020-02-25")), (0, 1));
        assert_eq!(days_since_first_case(first, date("2020-03-03")), (7, 8));
        assert_eq!(days_since_first_case(None, date("2020-03-03")), (0, 1));
    }

    #[test]
    fn first_case_date_skips_zero_prefix() {
        let s = [
            (date("2020-02-24"), 0),
            (date("2020-02-25"), 0),
            (date("2020-02-26"), 2),
            (date("2020-02-27"), 3),
        ];
        assert_eq!(first_case_date(&s), Some(date("2020-02-26")));
        assert_eq!(first_case_date(&s[..2]), None);
    }

    #[test]
    fn tests_split_by_population_share() {
        let pops = BTreeMap::from([
            (CantonId::parse("ZH").unwrap(), 1000.0),
            (CantonId::parse("BE").unwrap(), 1000.0),
        ]);
        let est = estimate_tests(&[(date("2020-03-01"), 100.0)], &pops).unwrap();
        for v in est.values() {
            assert_eq!(*v, 50.0);
        }
        assert!(matches!(
            estimate_tests(&[(date("2020-03-01"), 0.0)], &pops),
            Err(PanelError::ZeroNationalTests(_))
        ));
    }

    #[test]
    fn tests_sum_to_national_total() {
        let pops: BTreeMap<_, _> = crate::reference::POPULATION
            .iter()
            .map(|(c, p)| (CantonId::parse(c).unwrap(), *p as f64))
            .collect();
        let national = [(date("2020-03-01"), 4321.0), (date("2020-03-02"), 7.5)];
        let est = estimate_tests(&national, &pops).unwrap();
        for (d, u) in national {
            let sum: f64 = est
                .iter()
                .filter(|((_, dd), _)| *dd == d)
                .map(|(_, v)| v)
                .sum();
            assert!(((sum - u) / u).abs() < 1e-9);
        }
    }
}
