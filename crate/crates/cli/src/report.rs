//! Merges finished runs into one CSV and a plain-text narrative.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use swissmob::fit::ForestRow;
use swissmob::io::{read_forest, RunManifest, FOREST_FILE, MANIFEST_FILE};
use swissmob::ModelKind;

use crate::error::{CliError, Result};
use crate::output::{format_row, read_verdict, write_csv, write_text};
use crate::Outcome;

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";

struct Run {
    rel: String,
    manifest: RunManifest,
    forest: Vec<ForestRow>,
    dir: PathBuf,
}

fn collect(dir: &Path, root: &Path, out: &mut Vec<Run>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::path(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    let mp = dir.join(MANIFEST_FILE);
    if mp.is_file() && dir.join(FOREST_FILE).is_file() {
        let manifest = RunManifest::read(&mp)?;
        if manifest.spec.is_some() {
            let rel = dir.strip_prefix(root).unwrap_or(dir).display().to_string();
            out.push(Run {
                rel: if rel.is_empty() { ".".into() } else { rel },
                forest: read_forest(&dir.join(FOREST_FILE))?,
                manifest,
                dir: dir.to_path_buf(),
            });
        }
    }
    for e in entries.into_iter().filter(|p| p.is_dir()) {
        collect(&e, root, out)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ReportRow<'a> {
    run: &'a str,
    command: &'a str,
    seed: u64,
    sampler_seed: Option<u64>,
    model: &'a str,
    label: &'a str,
    parameter: &'a str,
    scale: swissmob::fit::Scale,
    mean: f64,
    cri80_lo: f64,
    cri80_hi: f64,
    cri95_lo: f64,
    cri95_hi: f64,
    effect: String,
}

pub fn report(runs_dir: &Path, dest: &Path) -> Result<Outcome> {
    if !runs_dir.is_dir() {
        return Err(CliError::path(runs_dir, "run directory not found"));
    }
    let mut runs = Vec::new();
    collect(runs_dir, runs_dir, &mut runs)?;
    if runs.is_empty() {
        return Err(CliError::NoRunsFound(runs_dir.to_path_buf()));
    }

    let rows: Vec<ReportRow> = runs
        .iter()
        .flat_map(|r| {
            r.forest.iter().map(move |f| ReportRow {
                run: &r.rel,
                command: &r.manifest.command,
                seed: r.manifest.seed,
                sampler_seed: r.manifest.sampler.map(|s| s.seed),
                model: &f.model,
                label: &f.label,
                parameter: &f.parameter,
                scale: f.scale,
                mean: f.mean,
                cri80_lo: f.cri80_lo,
                cri80_hi: f.cri80_hi,
                cri95_lo: f.cri95_lo,
                cri95_hi: f.cri95_hi,
                effect: format_row(f),
            })
        })
        .collect();

    let mut text = String::new();
    let _ = writeln!(text, "{} runs under {}", runs.len(), runs_dir.display());
    let mut warnings = false;
    for r in &runs {
        let spec = r.manifest.spec.as_ref().expect("collected runs carry a spec");
        let sampler = r.manifest.sampler.map_or(String::new(), |s| {
            format!(", sampler seed {}, {} chains x ({} + {})", s.seed, s.chains, s.warmup, s.samples)
        });
        let _ = writeln!(text, "\n== {spec} [{}] ==", r.rel);
        let _ = writeln!(text, "  {} with seed {}{sampler}", r.manifest.command, r.manifest.seed);
        let width = r.forest.iter().map(|f| f.label.len()).max().unwrap_or(0);
        for f in &r.forest {
            let _ = writeln!(text, "  {:<width$}  {}", f.label, format_row(f));
        }
        match read_verdict(&r.dir) {
            Some(v) if v.all_pass() => {
                let _ = writeln!(text, "  diagnostics: all {} checks pass", v.checks.len());
            }
            Some(v) => {
                warnings = true;
                for c in v.checks.iter().filter(|c| c.status != swissmob::diagnostics::CheckStatus::Pass) {
                    let _ = writeln!(text, "  diagnostics: WARN {}: {}", c.name, c.detail);
                }
            }
            None => {
                let _ = writeln!(text, "  diagnostics: no verdict recorded");
            }
        }
    }

    let mut lags: Vec<(u32, &Run, &ForestRow)> = runs
        .iter()
        .filter_map(|r| {
            let spec = r.manifest.spec.as_ref()?;
            (spec.kind == ModelKind::Cases).then_some(())?;
            Some((spec.lag?, r, r.forest.first()?))
        })
        .collect();
    if !lags.is_empty() {
        lags.sort_by_key(|l| l.0);
        let _ = writeln!(text, "\n== lagged mobility elasticities ==");
        for (s, r, f) in &lags {
            let _ = writeln!(text, "  lag {s:>2}  {}  [{}]", format_row(f), r.rel);
        }
    }

    fs::create_dir_all(dest).map_err(|e| CliError::path(dest, e))?;
    write_csv(&dest.join(REPORT_CSV), &rows)?;
    write_text(&dest.join(REPORT_TXT), &text)?;
    print!("{text}");
    Ok(Outcome { warnings })
}
