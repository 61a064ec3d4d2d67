use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use swissmob::io::{load_draws, RunManifest, MANIFEST_FILE};
use swissmob::model::{format_effect, summarize_effect, transform_effects};
use swissmob::panel::PanelTables;
use swissmob::synth::{generate, SynthConfig};
use swissmob::telecom::ScenarioConfig;
use swissmob::CantonId;

fn swissmob(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swissmob")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_csv<T: serde::Serialize>(path: PathBuf, rows: &[T]) {
    let mut w = csv::Writer::from_path(path).unwrap();
    for r in rows {
        w.serialize(r).unwrap();
    }
    w.flush().unwrap();
}

/// Synthetic panel tables for six neighbouring cantons.
fn panel_dir(root: &Path) -> PathBuf {
    let cantons = ["ZH", "AG", "LU", "ZG", "SZ", "BE"].map(|c| CantonId::parse(c).unwrap()).to_vec();
    let cfg = SynthConfig { cantons, ..SynthConfig::default() };
    let sp = generate(&cfg, 31).unwrap();
    let t: &PanelTables = &sp.tables;
    let dir = root.join("panel");
    fs::create_dir_all(&dir).unwrap();
    write_csv(dir.join("trips.csv"), &t.trips);
    write_csv(dir.join("cases.csv"), &t.cases);
    write_csv(dir.join("policies.csv"), &t.policies);
    write_csv(dir.join("population.csv"), &t.population);
    if let Some(tests) = &t.tests {
        write_csv(dir.join("tests.csv"), tests);
    }
    dir
}

const QUICK: [&str; 6] = ["--chains", "2", "--warmup", "300", "--samples", "200"];

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_twice_with_one_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = swissmob(&["simulate", "--scenario", "validation", "--seed", "7", "--out", s(d)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let text = stdout(&o);
        for key in ["devices", "trips", "mode shares", "purpose shares", "weekly trip reduction"] {
            assert!(text.contains(key), "missing {key}: {text}");
        }
    }
    let (fa, fb) = (files(&a), files(&b));
    assert!(fa.iter().any(|f| f.0 == "trips.csv") && fa.iter().any(|f| f.0 == MANIFEST_FILE));
    assert_eq!(fa, fb);

    // the manifest alone reproduces the run
    let c = tmp.path().join("c");
    let o = swissmob(&["simulate", "--config", s(&a.join(MANIFEST_FILE)), "--out", s(&c)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(files(&c), fa);

    let o = swissmob(&["simulate", "--scenario", "validation", "--seed", "8", "--out", s(&c)]);
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(c.join("trips.csv")).unwrap(), fs::read(a.join("trips.csv")).unwrap());
}

#[test]
fn scenario_without_devices_fails_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::bundled("validation").unwrap();
    cfg.grid.as_mut().unwrap().min_devices = 0;
    let p = tmp.path().join("empty.toml");
    fs::write(&p, cfg.to_toml()).unwrap();
    let o = swissmob(&["simulate", "--scenario", s(&p), "--out", s(&tmp.path().join("out"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no devices"), "{}", stderr(&o));
}

#[test]
fn missing_inputs_exit_with_code_two_and_name_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere");
    let o = swissmob(&["fit-mobility", "--panel", s(&missing), "--out", s(&tmp.path().join("run"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains(&missing.join("trips.csv").display().to_string()), "{}", stderr(&o));

    let o = swissmob(&["fit-mobility", "--config", s(&tmp.path().join("absent.toml"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("absent.toml"));

    let o = swissmob(&["fit-cases", "--lags", "9:7"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("9:7"));

    let o = swissmob(&["no-such-command"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn report_without_runs_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = swissmob(&["report", s(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no completed runs"), "{}", stderr(&o));
}

#[test]
fn fits_diagnostics_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let panel = panel_dir(tmp.path());
    let runs = tmp.path().join("runs");

    let o = swissmob(&["build-panel", "--panel", s(&panel), "--out", s(&tmp.path().join("built"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let built = fs::read_to_string(tmp.path().join("built/panel.csv")).unwrap();
    assert!(built.starts_with("canton,date,weekday,total,"));

    let mob = runs.join("mobility");
    let mut args = vec!["fit-mobility", "--panel", s(&panel), "--seed", "11", "--out", s(&mob)];
    args.extend(QUICK);
    let o = swissmob(&args);
    assert!(matches!(code(&o), 0 | 1), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("parallel trends") && text.contains("identified"), "{text}");
    for f in ["draws.csv", "telemetry.csv", "summary.csv", "forest.csv", "verdict.toml", "pareto.csv", MANIFEST_FILE] {
        assert!(mob.join(f).is_file(), "missing {f}");
    }

    // rerun from the manifest alone, elsewhere
    let again = tmp.path().join("again");
    let o = swissmob(&["fit-mobility", "--config", s(&mob.join(MANIFEST_FILE)), "--out", s(&again)]);
    assert!(matches!(code(&o), 0 | 1), "{}", stderr(&o));
    assert_eq!(files(&again), files(&mob));

    let cases = runs.join("cases");
    let mut args = vec!["fit-cases", "--panel", s(&panel), "--lags", "7:13", "--seed", "12", "--out", s(&cases)];
    args.extend(QUICK);
    let o = swissmob(&args);
    assert!(matches!(code(&o), 0 | 1), "{}", stderr(&o));
    assert_eq!(stdout(&o).matches("== cases: total lagged").count(), 7);
    for lag in 7..=13 {
        assert!(cases.join(format!("lag_{lag:02}/summary.csv")).is_file());
    }

    let o = swissmob(&["diagnose", s(&mob)]);
    assert!(matches!(code(&o), 0 | 1), "{}", stderr(&o));
    for f in ["ppc.csv", "pareto.csv", "policy_correlations.csv", "verdict.toml", MANIFEST_FILE] {
        assert!(mob.join("diagnostics").join(f).is_file(), "missing {f}");
    }
    assert!(stdout(&o).contains("Pareto k"));

    let o = swissmob(&["report", s(&runs)]);
    assert!(matches!(code(&o), 0 | 1), "{}", stderr(&o));
    let report = fs::read_to_string(runs.join("report.txt")).unwrap();
    assert!(report.starts_with("8 runs"), "{report}");
    let (blocks, lag_table) = report.split_once("== lagged mobility elasticities ==").unwrap();
    assert_eq!(lag_table.trim().lines().count(), 7);
    // one policy table: the five measures appear once each outside the lag table
    assert_eq!(blocks.matches(swissmob::Measure::ALL[1].label()).count(), 1);
    assert_eq!(report.matches("fit-mobility with seed 11").count(), 1);
    assert_eq!(report.matches("fit-cases with seed 12").count(), 7);
    // the narrative uses the shared percentage formatter
    let m = RunManifest::read(&mob.join(MANIFEST_FILE)).unwrap();
    let draws = load_draws(&mob, &m).unwrap();
    let ban5 = format_effect(&summarize_effect(&transform_effects(&draws, "beta[2]").unwrap()));
    assert!(report.contains(&ban5), "{ban5} not in {report}");
    let merged = fs::read_to_string(runs.join("report.csv")).unwrap();
    assert_eq!(merged.lines().count(), 1 + 5 + 7);
}

#[test]
fn extension_commands_write_their_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let panel = panel_dir(tmp.path());
    let quick = ["--chains", "1", "--warmup", "150", "--samples", "60"];
    for (cmd, file) in [
        ("mediate", "decomposition.csv"),
        ("fit-spatial", "forest.csv"),
        ("fit-joint", "effect_correlations.csv"),
        ("robustness", "cases_tests_control/summary.csv"),
    ] {
        let out = tmp.path().join(cmd);
        let mut args = vec![cmd, "--panel", s(&panel), "--out", s(&out)];
        args.extend(quick);
        let o = swissmob(&args);
        assert!(matches!(code(&o), 0 | 1), "{cmd}: {}", stderr(&o));
        assert!(out.join(file).is_file(), "{cmd}: missing {file}");
        assert!(out.join(MANIFEST_FILE).is_file());
    }
}

#[test]
fn sampler_trouble_exits_with_the_warning_code() {
    let tmp = tempfile::tempdir().unwrap();
    let panel = panel_dir(tmp.path());
    let out = tmp.path().join("run");
    let o = swissmob(&[
        "fit-mobility", "--panel", s(&panel), "--out", s(&out), "--chains", "2", "--warmup", "3", "--samples", "20",
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stdout(&o).contains("[WARN]"));
}
