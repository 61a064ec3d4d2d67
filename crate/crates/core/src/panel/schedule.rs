use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate, Weekday};

use super::{CantonId, Measure, PanelError};
use crate::reference::{date, POLICY_TIMELINE};

/// Start dates per `(canton, measure)`. Measures never end once started.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PolicySchedule {
    starts: BTreeMap<(CantonId, Measure), NaiveDate>,
}

impl PolicySchedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// The first-wave timeline. For overlapping announcements the earliest
    /// start wins, so a later nationwide rule does not move a canton that
    /// had already adopted the measure.
    pub fn bundled() -> Self {
        let mut s = Self::new();
        for (d, measure, cantons) in POLICY_TIMELINE {
            let measure: Measure = measure.parse().expect("bundled measure");
            let start = date(d);
            let targets: Vec<CantonId> = if *cantons == "*" {
                CantonId::all().collect()
            } else {
                cantons
                    .split(',')
                    .map(|c| CantonId::parse(c).expect("bundled canton"))
                    .collect()
            };
            for c in targets {
                s.starts.entry((c, measure)).or_insert(start);
            }
        }
        s
    }

    /// Adds an entry. School closures falling on a weekend move to the
    /// following Monday. A second, different start for the same pair is a
    /// conflict; an identical repeat is accepted.
    pub fn insert(
        &mut self,
        canton: CantonId,
        measure: Measure,
        start: NaiveDate,
    ) -> Result<(), PanelError> {
        let start = if measure == Measure::SchoolClosure {
            shift_to_weekday(start)
        } else {
            start
        };
        match self.starts.get(&(canton, measure)) {
            Some(&existing) if existing != start => Err(PanelError::ScheduleConflict {
                canton,
                measure,
                first: existing,
                second: start,
            }),
            _ => {
                self.starts.insert((canton, measure), start);
                Ok(())
            }
        }
    }

    pub fn start(&self, canton: CantonId, measure: Measure) -> Option<NaiveDate> {
        self.starts.get(&(canton, measure)).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (CantonId, Measure, NaiveDate)> + '_ {
        self.starts.iter().map(|(&(c, m), &d)| (c, m, d))
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn dummies(&self, canton: CantonId, on: NaiveDate) -> [bool; 5] {
        policy_dummies(self, canton, on)
    }
}

/// `d_itl`: true iff measure `l` has a start date on or before `on`.
pub fn policy_dummies(schedule: &PolicySchedule, canton: CantonId, on: NaiveDate) -> [bool; 5] {
    let mut out = [false; 5];
    for m in Measure::ALL {
        out[m.index()] = schedule.start(canton, m).is_some_and(|s| s <= on);
    }
    out
}

fn shift_to_weekday(d: NaiveDate) -> NaiveDate {
    match d.weekday() {
        Weekday::Sat => d + Duration::days(2),
        Weekday::Sun => d + Duration::days(1),
        _ => d,
    }
}
