//! Bundled reference data: canton codes, the first-wave policy timeline,
//! canton adjacency, a synthetic population table and first-case dates.

use chrono::NaiveDate;

/// The 26 canonical canton abbreviations, alphabetical.
pub const CANTON_CODES: [&str; 26] = [
    "AG", "AI", "AR", "BE", "BL", "BS", "FR", "GE", "GL", "GR", "JU", "LU", "NE", "NW", "OW",
    "SG", "SH", "SO", "SZ", "TG", "TI", "UR", "VD", "VS", "ZG", "ZH",
];

/// Policy timeline as `(date, measure, cantons)`; `*` means every canton.
/// Later rows never override an earlier start for the same canton and measure.
pub const POLICY_TIMELINE: &[(&str, &str, &str)] = &[
    ("2020-03-10", "border_closure", "GR,TI,VS"),
    ("2020-03-13", "ban100", "*"),
    ("2020-03-14", "venue_closure", "TI"),
    ("2020-03-14", "border_closure", "GR,SG"),
    ("2020-03-16", "school_closure", "*"),
    ("2020-03-17", "venue_closure", "*"),
    ("2020-03-17", "border_closure", "AG,BL,BS,SH,TG"),
    ("2020-03-18", "ban5", "JU,VD"),
    ("2020-03-18", "border_closure", "GE,JU,NE,VD"),
    ("2020-03-20", "ban5", "*"),
    ("2020-03-25", "border_closure", "*"),
];

/// Shared land borders between cantons.
pub const ADJACENCY_EDGES: &[(&str, &str)] = &[
    ("AG", "BE"),
    ("AG", "BL"),
    ("AG", "LU"),
    ("AG", "SO"),
    ("AG", "ZG"),
    ("AG", "ZH"),
    ("AI", "AR"),
    ("AI", "SG"),
    ("AR", "SG"),
    ("BE", "FR"),
    ("BE", "JU"),
    ("BE", "LU"),
    ("BE", "NE"),
    ("BE", "OW"),
    ("BE", "SO"),
    ("BE", "UR"),
    ("BE", "VD"),
    ("BE", "VS"),
    ("BL", "BS"),
    ("BL", "JU"),
    ("BL", "SO"),
    ("FR", "NE"),
    ("FR", "VD"),
    ("GE", "VD"),
    ("GL", "GR"),
    ("GL", "SG"),
    ("GL", "SZ"),
    ("GL", "UR"),
    ("GR", "SG"),
    ("GR", "TI"),
    ("GR", "UR"),
    ("JU", "SO"),
    ("LU", "NW"),
    ("LU", "OW"),
    ("LU", "SZ"),
    ("LU", "ZG"),
    ("NE", "VD"),
    ("NW", "OW"),
    ("NW", "UR"),
    ("OW", "UR"),
    ("SG", "SZ"),
    ("SG", "TG"),
    ("SG", "ZH"),
    ("SH", "TG"),
    ("SH", "ZH"),
    ("SZ", "UR"),
    ("SZ", "ZG"),
    ("SZ", "ZH"),
    ("TG", "ZH"),
    ("TI", "UR"),
    ("TI", "VS"),
    ("UR", "VS"),
    ("VD", "VS"),
    ("ZG", "ZH"),
];

/// Synthetic population table with a realistic size spread (rounded figures).
pub const POPULATION: [(&str, u64); 26] = [
    ("AG", 678_000),
    ("AI", 16_100),
    ("AR", 55_200),
    ("BE", 1_035_000),
    ("BL", 288_100),
    ("BS", 193_100),
    ("FR", 318_700),
    ("GE", 499_500),
    ("GL", 40_400),
    ("GR", 198_400),
    ("JU", 73_400),
    ("LU", 409_600),
    ("NE", 176_900),
    ("NW", 43_200),
    ("OW", 37_800),
    ("SG", 507_700),
    ("SH", 82_000),
    ("SO", 273_200),
    ("SZ", 159_200),
    ("TG", 276_500),
    ("TI", 353_300),
    ("UR", 36_400),
    ("VD", 799_100),
    ("VS", 344_000),
    ("ZG", 126_800),
    ("ZH", 1_521_000),
];

/// Synthetic first-reported-case dates spanning Feb 25 to Mar 16.
pub const FIRST_CASE: [(&str, &str); 26] = [
    ("AG", "2020-02-28"),
    ("AI", "2020-03-16"),
    ("AR", "2020-03-06"),
    ("BE", "2020-02-28"),
    ("BL", "2020-02-28"),
    ("BS", "2020-02-27"),
    ("FR", "2020-03-02"),
    ("GE", "2020-02-26"),
    ("GL", "2020-03-09"),
    ("GR", "2020-02-27"),
    ("JU", "2020-03-01"),
    ("LU", "2020-03-03"),
    ("NE", "2020-03-01"),
    ("NW", "2020-03-09"),
    ("OW", "2020-03-11"),
    ("SG", "2020-03-02"),
    ("SH", "2020-03-05"),
    ("SO", "2020-03-04"),
    ("SZ", "2020-03-05"),
    ("TG", "2020-03-04"),
    ("TI", "2020-02-25"),
    ("UR", "2020-03-12"),
    ("VD", "2020-02-27"),
    ("VS", "2020-02-28"),
    ("ZG", "2020-03-03"),
    ("ZH", "2020-02-27"),
];

pub fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").expect("bundled date")
}

/// Default mobility-model window.
pub fn mobility_window() -> (NaiveDate, NaiveDate) {
    (date("2020-02-24"), date("2020-04-05"))
}

/// Lags (days) between mobility and reported cases.
pub const LAGS: std::ops::RangeInclusive<u32> = 7..=13;

/// Canton adjacency as a CSV edge list (`a,b` per line, header row).
pub fn adjacency_csv() -> String {
    let mut out = String::from("canton_a,canton_b\n");
    for (a, b) in ADJACENCY_EDGES {
        out.push_str(a);
        out.push(',');
        out.push_str(b);
        out.push('\n');
    }
    out
}

pub fn population_csv() -> String {
    let mut out = String::from("canton,population\n");
    for (c, p) in POPULATION {
        out.push_str(&format!("{c},{p}\n"));
    }
    out
}

pub fn policies_csv() -> String {
    let schedule = crate::panel::PolicySchedule::bundled();
    let mut out = String::from("canton,measure,start_date\n");
    for (canton, measure, start) in schedule.entries() {
        out.push_str(&format!("{canton},{},{start}\n", measure.name()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn adjacency_is_simple_and_connected() {
        let codes: BTreeSet<_> = CANTON_CODES.iter().copied().collect();
        let mut seen = BTreeSet::new();
        for (a, b) in ADJACENCY_EDGES {
            assert!(codes.contains(a) && codes.contains(b));
            assert!(a < b, "edges listed once, ordered");
            assert!(seen.insert((a, b)));
        }
        // flood fill
        let mut reached = BTreeSet::from(["AG"]);
        loop {
            let before = reached.len();
            for (a, b) in ADJACENCY_EDGES {
                if reached.contains(a) || reached.contains(b) {
                    reached.insert(a);
                    reached.insert(b);
                }
            }
            if reached.len() == before {
                break;
            }
        }
        assert_eq!(reached.len(), 26);
    }

    #[test]
    fn tables_cover_all_cantons_in_order() {
        for (i, code) in CANTON_CODES.iter().enumerate() {
            assert_eq!(POPULATION[i].0, *code);
            assert_eq!(FIRST_CASE[i].0, *code);
        }
    }
}
