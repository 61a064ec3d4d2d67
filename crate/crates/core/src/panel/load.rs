use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{
    days_since_first_case, estimate_tests, CantonId, Measure, MobilityVar, PanelDataset,
    PanelError, PanelRow, PolicySchedule,
};
use crate::reference::{mobility_window, LAGS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripCountRecord {
    pub canton: String,
    pub date: NaiveDate,
    pub variable: String,
    pub count: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub canton: String,
    pub date: NaiveDate,
    pub cumulative_cases: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub canton: String,
    pub measure: String,
    pub start_date: NaiveDate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationRecord {
    pub canton: String,
    pub population: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub date: NaiveDate,
    pub national_tests: f64,
}

/// File locations of the raw inputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelSources {
    pub trips: PathBuf,
    pub cases: PathBuf,
    pub policies: PathBuf,
    pub population: PathBuf,
    pub tests: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Balanced window of the mobility model; clipped to the trip data.
    pub mobility_window: (NaiveDate, NaiveDate),
    /// Last date of the cases model (clipped to the trip data).
    pub cases_window_end: NaiveDate,
    /// Clamp decreasing cumulative counts instead of failing.
    pub clamp_case_corrections: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            mobility_window: mobility_window(),
            cases_window_end: mobility_window().1,
            clamp_case_corrections: false,
        }
    }
}

/// Raw records, already parsed but not yet validated.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PanelTables {
    pub trips: Vec<TripCountRecord>,
    pub cases: Vec<CaseRecord>,
    pub policies: Vec<PolicyRecord>,
    pub population: Vec<PopulationRecord>,
    pub tests: Option<Vec<TestRecord>>,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PanelError> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| PanelError::Csv {
            path: name.clone(),
            source,
        })?;
    rdr.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|source| PanelError::Csv { path: name, source })
}

/// Reads and validates the five input tables.
pub fn load_panel(sources: &PanelSources, opts: &LoadOptions) -> Result<PanelDataset, PanelError> {
    let tables = PanelTables {
        trips: read_csv(&sources.trips)?,
        cases: read_csv(&sources.cases)?,
        policies: read_csv(&sources.policies)?,
        population: read_csv(&sources.population)?,
        tests: match &sources.tests {
            Some(p) => Some(read_csv(p)?),
            None => None,
        },
    };
    tables.build(opts)
}

impl PanelTables {
    pub fn build(&self, opts: &LoadOptions) -> Result<PanelDataset, PanelError> {
        let mut populations = BTreeMap::new();
        for r in &self.population {
            let c = CantonId::parse(&r.canton)?;
            if !(r.population > 0.0) {
                return Err(PanelError::NegativeCount {
                    table: "population",
                    detail: format!("{c}: {}", r.population),
                });
            }
            populations.insert(c, r.population);
        }
        if populations.is_empty() {
            return Err(PanelError::Empty("population table"));
        }
        let known = |c: CantonId| -> Result<CantonId, PanelError> {
            if populations.contains_key(&c) {
                Ok(c)
            } else {
                Err(PanelError::MissingCanton(c))
            }
        };

        let mut trips: BTreeMap<(CantonId, NaiveDate), [u64; 6]> = BTreeMap::new();
        for r in &self.trips {
            let c = known(CantonId::parse(&r.canton)?)?;
            let k: MobilityVar = r.variable.parse()?;
            if r.count < 0 {
                return Err(PanelError::NegativeCount {
                    table: "trips",
                    detail: format!("{c} {} {k}: {}", r.date, r.count),
                });
            }
            trips.entry((c, r.date)).or_insert([0; 6])[k.index()] += r.count as u64;
        }
        let first_date = trips.keys().map(|(_, d)| *d).min();
        let last_date = trips.keys().map(|(_, d)| *d).max();
        let (Some(first_date), Some(last_date)) = (first_date, last_date) else {
            return Err(PanelError::Empty("trips table"));
        };

        let mut schedule = PolicySchedule::new();
        for r in &self.policies {
            let c = known(CantonId::parse(&r.canton)?)?;
            let m: Measure = r.measure.parse()?;
            schedule.insert(c, m, r.start_date)?;
        }

        let mut warnings = Vec::new();
        let mut case_series: BTreeMap<CantonId, Vec<(NaiveDate, i64)>> = BTreeMap::new();
        for r in &self.cases {
            let c = known(CantonId::parse(&r.canton)?)?;
            if r.cumulative_cases < 0 {
                return Err(PanelError::NegativeCount {
                    table: "cases",
                    detail: format!("{c} {}: {}", r.date, r.cumulative_cases),
                });
            }
            case_series.entry(c).or_default().push((r.date, r.cumulative_cases));
        }
        let mut cumulative: BTreeMap<CantonId, BTreeMap<NaiveDate, u64>> = BTreeMap::new();
        for (c, mut series) in case_series {
            series.sort_by_key(|(d, _)| *d);
            let mut clean = BTreeMap::new();
            let mut prev = 0u64;
            for (d, v) in series {
                let v = v as u64;
                if v < prev {
                    if !opts.clamp_case_corrections {
                        return Err(PanelError::NonMonotoneCumulativeCases {
                            canton: c,
                            date: d,
                            previous: prev,
                            current: v,
                        });
                    }
                    warnings.push(format!(
                        "clamped cumulative cases for {c} on {d}: {v} -> {prev}"
                    ));
                    clean.insert(d, prev);
                } else {
                    clean.insert(d, v);
                    prev = v;
                }
            }
            cumulative.insert(c, clean);
        }
        let first_case: BTreeMap<CantonId, NaiveDate> = cumulative
            .iter()
            .filter_map(|(c, s)| s.iter().find(|(_, v)| **v > 0).map(|(d, _)| (*c, *d)))
            .collect();

        let est_tests = match &self.tests {
            Some(t) => {
                let series: Vec<(NaiveDate, f64)> =
                    t.iter().map(|r| (r.date, r.national_tests)).collect();
                Some(estimate_tests(&series, &populations)?)
            }
            None => None,
        };

        let cantons: Vec<CantonId> = populations.keys().copied().collect();
        let n_days = (last_date - first_date).num_days() as usize + 1;
        let dates: Vec<NaiveDate> = (0..n_days)
            .map(|i| first_date + Duration::days(i as i64))
            .collect();

        let mut rows = Vec::with_capacity(cantons.len() * n_days);
        for &c in &cantons {
            let series = cumulative.get(&c);
            let mut carried = 0u64;
            let mut prev_cum = series
                .and_then(|s| s.range(..first_date).next_back().map(|(_, v)| *v))
                .unwrap_or(0);
            for &d in &dates {
                if let Some(v) = series.and_then(|s| s.range(..=d).next_back().map(|(_, v)| *v)) {
                    carried = v;
                }
                let cum = carried;
                let new_cases = cum - prev_cum.min(cum);
                prev_cum = cum;
                let (q, z) = days_since_first_case(first_case.get(&c).copied(), d);
                rows.push(PanelRow {
                    canton: c,
                    date: d,
                    weekday: d.weekday(),
                    mobility: trips.get(&(c, d)).copied().unwrap_or([0; 6]),
                    new_cases,
                    cumulative_cases: cum,
                    policy: schedule.dummies(c, d),
                    q,
                    z,
                    log_population: populations[&c].ln(),
                    est_tests: est_tests.as_ref().and_then(|m| m.get(&(c, d)).copied()),
                });
            }
        }

        let (ws, we) = opts.mobility_window;
        let mobility_window = (ws.max(first_date), we.min(last_date));
        let cases_window_end = opts.cases_window_end.min(last_date);

        let mut ds = PanelDataset {
            rows,
            cantons,
            dates,
            populations,
            first_case,
            schedule,
            mobility_window,
            cases_window_end,
            mundlak_z_mobility: BTreeMap::new(),
            mundlak_z_cases: BTreeMap::new(),
            mundlak_m: BTreeMap::new(),
            warnings,
        };
        ds.mundlak_z_mobility = PanelDataset::mean_log_z(ds.mobility_rows());
        ds.mundlak_z_cases = PanelDataset::mean_log_z(ds.cases_rows());
        ds.mundlak_m = compute_mundlak_m(&ds);
        Ok(ds)
    }
}

fn compute_mundlak_m(ds: &PanelDataset) -> BTreeMap<(CantonId, MobilityVar, u32), f64> {
    let mut out = BTreeMap::new();
    let by_canton: BTreeSet<CantonId> = ds.cases_rows().map(|r| r.canton).collect();
    for c in by_canton {
        let dates: Vec<NaiveDate> = ds
            .cases_rows()
            .filter(|r| r.canton == c)
            .map(|r| r.date)
            .collect();
        for k in MobilityVar::ALL {
            for s in LAGS {
                let vals: Result<Vec<f64>, _> = dates
                    .iter()
                    .map(|&d| ds.lagged_log_count(c, d, k, s))
                    .collect();
                if let Ok(v) = vals {
                    out.insert((c, k, s), v.iter().sum::<f64>() / v.len() as f64);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::date;

    fn tables(days: i64) -> PanelTables {
        let start = date("2020-02-24");
        let mut t = PanelTables::default();
        for (code, pop) in crate::reference::POPULATION {
            t.population.push(PopulationRecord {
                canton: code.into(),
                population: pop as f64,
            });
            for i in 0..days {
                t.trips.push(TripCountRecord {
                    canton: code.into(),
                    date: start + Duration::days(i),
                    variable: "total".into(),
                    count: 100 + i,
                });
            }
            t.cases.push(CaseRecord {
                canton: code.into(),
                date: date("2020-03-01"),
                cumulative_cases: 3,
            });
        }
        t
    }

    #[test]
    fn row_count_is_cantons_times_days() {
        let ds = tables(42).build(&LoadOptions::default()).unwrap();
        assert_eq!(ds.rows().len(), 26 * 42);
        assert_eq!(ds.mobility_window(), (date("2020-02-24"), date("2020-04-05")));
    }

    #[test]
    fn decreasing_cumulative_cases_is_an_error() {
        let mut t = tables(10);
        t.cases.push(CaseRecord {
            canton: "BE".into(),
            date: date("2020-03-02"),
            cumulative_cases: 1,
        });
        match t.build(&LoadOptions::default()) {
            Err(PanelError::NonMonotoneCumulativeCases { canton, date: d, .. }) => {
                assert_eq!(canton.code(), "BE");
                assert_eq!(d, date("2020-03-02"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let opts = LoadOptions {
            clamp_case_corrections: true,
            ..LoadOptions::default()
        };
        let ds = t.build(&opts).unwrap();
        assert_eq!(ds.warnings().len(), 1);
        let be = CantonId::parse("BE").unwrap();
        assert_eq!(ds.row(be, date("2020-03-02")).unwrap().new_cases, 0);
    }

    #[test]
    fn canton_outside_population_table_is_rejected() {
        let mut t = tables(5);
        t.population.retain(|r| r.canton != "UR");
        assert!(matches!(
            t.build(&LoadOptions::default()),
            Err(PanelError::MissingCanton(c)) if c.code() == "UR"
        ));
    }

    #[test]
    fn negative_trip_count_is_rejected() {
        let mut t = tables(5);
        t.trips[3].count = -1;
        assert!(matches!(
            t.build(&LoadOptions::default()),
            Err(PanelError::NegativeCount { .. })
        ));
    }

    #[test]
    fn cases_carry_forward_and_difference() {
        let ds = tables(20).build(&LoadOptions::default()).unwrap();
        let zh = CantonId::parse("ZH").unwrap();
        assert_eq!(ds.row(zh, date("2020-02-29")).unwrap().cumulative_cases, 0);
        let r = ds.row(zh, date("2020-03-01")).unwrap();
        assert_eq!((r.cumulative_cases, r.new_cases, r.z), (3, 3, 1));
        let r = ds.row(zh, date("2020-03-05")).unwrap();
        assert_eq!((r.cumulative_cases, r.new_cases, r.q), (3, 0, 4));
    }

    #[test]
    fn lag_seven_aligns_the_week_before() {
        let ds = tables(30).build(&LoadOptions::default()).unwrap();
        let ag = CantonId::parse("AG").unwrap();
        let got = ds
            .lagged_log_count(ag, date("2020-03-15"), MobilityVar::Total, 7)
            .unwrap();
        let m8 = ds.row(ag, date("2020-03-08")).unwrap().trips(MobilityVar::Total);
        assert_eq!(got, (m8 as f64).ln());
    }

    #[test]
    fn lag_before_data_and_zero_counts_are_distinct_errors() {
        let ds = tables(30).build(&LoadOptions::default()).unwrap();
        // first case on Mar 1, trips start Feb 24: lag 7 reaches before the data
        assert!(matches!(
            ds.lagged_mobility(MobilityVar::Total, 7),
            Err(PanelError::InsufficientHistory { .. })
        ));
        let ag = CantonId::parse("AG").unwrap();
        assert!(matches!(
            ds.lagged_log_count(ag, date("2020-03-15"), MobilityVar::Train, 7),
            Err(PanelError::ZeroCount { .. })
        ));
        assert!(matches!(
            ds.lagged_mobility(MobilityVar::Total, 14),
            Err(PanelError::InvalidLag(14))
        ));
    }
}
