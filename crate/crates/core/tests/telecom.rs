mod common;

use std::collections::HashMap;

use chrono::NaiveDate;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swissmob::panel::CantonId;
use swissmob::telecom::*;

use common::segment;

#[test]
fn extraction_matches_reference_segmenter() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut mismatches, mut trips, mut overnight) = (0, 0, 0);
    for _ in 0..1000 {
        let trace = segment::random_trace(&mut rng);
        let got = extract_trips(&trace).unwrap();
        let want = segment::segment(&trace);
        let same = got.len() == want.len()
            && got.iter().zip(&want).all(|(g, w)| {
                (g.origin, g.destination, g.depart_time, g.arrive_time) == (w.origin, w.destination, w.depart, w.arrive)
            });
        if !same || postcode_day_counts(&got) != segment::counts(&want) {
            mismatches += 1;
        }
        trips += want.len();
        overnight += want.iter().filter(|t| t.depart.div_euclid(DAY) != t.arrive.div_euclid(DAY)).count();
    }
    println!("{trips} trips, {overnight} across midnight");
    assert_eq!(mismatches, 0);
    assert!(trips > 500 && overnight > 10);
}

fn labeled() -> impl Strategy<Value = LabeledTrip> {
    (0..6u32, 0..6u32, 0..3 * DAY, 0..DAY, 0..3usize, any::<bool>()).prop_map(|(o, d, t, dur, m, c)| LabeledTrip {
        device: 0,
        origin: o,
        destination: d,
        depart_time: t,
        arrive_time: t + dur,
        mode: Mode::ALL[m],
        purpose: if c { Purpose::Commuting } else { Purpose::NonCommuting },
    })
}

proptest! {
    #[test]
    fn modes_and_purposes_partition_the_total(trips in prop::collection::vec(labeled(), 0..60)) {
        let cantons: Vec<_> = ["ZH", "ZH", "BE", "BE", "TI", "GE"]
            .iter()
            .enumerate()
            .map(|(i, c)| (i.to_string(), Some(CantonId::parse(c).unwrap())))
            .collect();
        let start = NaiveDate::from_ymd_opt(2020, 3, 2).unwrap();
        let recs = aggregate(&trips, &cantons, start, 4).unwrap();
        let mut cell: HashMap<(String, NaiveDate), HashMap<String, i64>> = HashMap::new();
        for r in &recs {
            cell.entry((r.canton.clone(), r.date)).or_default().insert(r.variable.clone(), r.count);
        }
        prop_assert_eq!(cell.len(), 4 * 4);
        for v in cell.values() {
            prop_assert_eq!(v["total"], v["train"] + v["road"] + v["highway"]);
            prop_assert_eq!(v["total"], v["commuter"] + v["noncommuter"]);
        }
    }
}

const TINY: &str = r#"
name = "two_cells"
days = 14
[positioning]
bounce_probability = 0.0
[[postcodes]]
id = "8001"
canton = "ZH"
polygon = [[0, 0], [2000, 0], [2000, 2000], [0, 2000]]
[[postcodes]]
id = "8002"
canton = "ZH"
polygon = [[2000, 0], [4000, 0], [4000, 2000], [2000, 2000]]
[[devices]]
home = [500, 1000]
work = [3500, 1000]
routine = "commuter"
[[devices]]
home = [1500, 1500]
routine = "scripted"
"#;

fn tiny_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::from_toml(TINY).unwrap();
    for i in 0..8 {
        for j in 0..4 {
            cfg.antennas.push(toml::from_str(&format!("id = {}\nx = {}\ny = {}", 100 + 4 * i + j, 250 + 500 * i, 250 + 500 * j)).unwrap());
        }
    }
    cfg
}

fn tiny() -> Scenario {
    Scenario::from_config(tiny_config()).unwrap()
}

#[test]
fn stationary_hour_stays_on_one_antenna() {
    let s = tiny();
    let sim = simulate_device(&s, 1, 5).unwrap();
    let hour: Vec<_> = sim.pings.iter().filter(|p| (3600..7200).contains(&p.timestamp)).collect();
    assert!(hour.len() >= 12, "{} pings", hour.len());
    assert!(hour.iter().all(|p| p.antenna == hour[0].antenna));
}

#[test]
fn commute_crosses_antennas_of_both_postcodes() {
    let s = tiny();
    let sim = simulate_device(&s, 0, 5).unwrap();
    let first = &sim.trips[0];
    let seen: Vec<u32> = sim
        .pings
        .iter()
        .filter(|p| (first.depart..=first.arrive).contains(&p.timestamp))
        .map(|p| s.postcode_of(s.antenna(p.antenna).unwrap().location))
        .collect();
    assert!(seen.contains(&0) && seen.contains(&1), "{seen:?}");
}

#[test]
fn scripted_commuter_home_and_work_are_recovered() {
    let s = tiny();
    let out = run_pipeline(&s, 9, false).unwrap();
    let p = out.profiles.iter().find(|p| p.device == s.devices[0].id).unwrap();
    assert_eq!((p.home, p.work), (0, 1));
    let commutes = out.trips.iter().filter(|t| t.device == p.device && t.purpose == Purpose::Commuting).count();
    // ten weekdays, out and back
    assert_eq!(commutes, 20);
}

#[test]
fn simulation_is_a_function_of_the_seed() {
    let s = tiny();
    let a = simulate_pings(&s, 77).unwrap();
    assert_eq!(a, simulate_pings(&s, 77).unwrap());
    assert_ne!(a.pings, simulate_pings(&s, 78).unwrap().pings);
}

#[test]
fn sampled_positions_average_to_the_point_estimate() {
    let radius = RadiusModel::default();
    let angle = AngleModel::default();
    let ant = Antenna {
        id: 1,
        location: Point::new(100.0, -50.0),
        azimuth: 0.7,
        beam_width: 120f64.to_radians(),
        kind: AntennaKind::Lte,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let draws: Vec<Point> =
        (0..n).map(|_| estimate_position(&ant, &radius, &angle, PositioningMode::Sample, &mut rng)).collect();
    let target = estimate_position(&ant, &radius, &angle, PositioningMode::Point, &mut rng);
    for coord in [|p: &Point| p.x, |p: &Point| p.y] {
        let xs: Vec<f64> = draws.iter().map(coord).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let se = sd / (n as f64).sqrt();
        assert!((m - coord(&target)).abs() < 3.0 * se, "mean {m} vs {} (se {se})", coord(&target));
    }
    // every draw lies inside the beam
    for p in &draws {
        let off = swissmob::telecom::geometry::angle_diff(ant.location.bearing(*p), ant.azimuth);
        assert!(off.abs() <= 0.5 * ant.beam_width + 1e-9);
    }
}

#[test]
fn validation_scenario_meets_accuracy_floors() {
    let s = Scenario::bundled("validation").unwrap();
    let out = run_pipeline(&s, 1, false).unwrap();
    let sm = &out.summary;
    println!("{sm:?}");
    assert!(sm.median_position_error <= 150.0);
    assert!(sm.mode_accuracy >= 0.9);
    assert!(sm.matched_trips as f64 >= 0.9 * sm.trips as f64);
}

#[test]
fn scenario_without_devices_is_rejected() {
    let mut cfg = tiny_config();
    cfg.devices.clear();
    assert!(matches!(Scenario::from_config(cfg), Err(TelecomError::EmptyScenario)));
}

#[test]
fn ping_log_round_trips_through_csv() {
    let s = tiny();
    let log = simulate_pings(&s, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pings.csv");
    log.write_csv(&path).unwrap();
    assert_eq!(PingLog::read_csv(&path).unwrap(), log.pings);
}
