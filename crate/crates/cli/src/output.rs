//! Files written by every fit and the console summary of a fit.

use std::fs;
use std::path::Path;

use serde::Serialize;
use swissmob::diagnostics::Verdict;
use swissmob::fit::{Fit, ForestRow, Scale};
use swissmob::io::{self, RunManifest, FOREST_FILE, MANIFEST_FILE, SUMMARY_FILE};
use swissmob::model::format_effect;

use crate::error::{CliError, Result};

pub const VERDICT_FILE: &str = "verdict.toml";
pub const PARETO_FILE: &str = "pareto.csv";

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::path(dir, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::path(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::path(path, e))?;
    }
    w.flush().map_err(|e| CliError::path(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::path(path, e))
}

pub fn push_output(m: &mut RunManifest, name: &str) {
    if !m.outputs.iter().any(|o| o == name) {
        m.outputs.push(name.to_string());
    }
}

pub fn write_verdict(dir: &Path, v: &Verdict) -> Result<()> {
    let text = toml::to_string(v).map_err(|e| CliError::path(dir.join(VERDICT_FILE), e))?;
    write_text(&dir.join(VERDICT_FILE), &text)
}

pub fn read_verdict(dir: &Path) -> Option<Verdict> {
    toml::from_str(&fs::read_to_string(dir.join(VERDICT_FILE)).ok()?).ok()
}

/// Draws, telemetry, summary, forest rows, verdict, Pareto shapes (when
/// computed) and the manifest.
pub fn write_fit(dir: &Path, fit: &Fit, manifest: &mut RunManifest) -> Result<()> {
    create_dir(dir)?;
    let r = &fit.report;
    io::save_draws(&fit.draws, dir, manifest)?;
    io::write_summary(&r.summary, &dir.join(SUMMARY_FILE))?;
    io::write_forest(&r.forest, &dir.join(FOREST_FILE))?;
    write_verdict(dir, &r.verdict)?;
    for f in [SUMMARY_FILE, FOREST_FILE, VERDICT_FILE] {
        push_output(manifest, f);
    }
    if let Some(p) = &r.pareto {
        io::write_pareto(p, &dir.join(PARETO_FILE))?;
        push_output(manifest, PARETO_FILE);
    }
    manifest.spec = Some(r.spec.clone());
    manifest.sampler = Some(r.sampler);
    manifest.write(&dir.join(MANIFEST_FILE))?;
    Ok(())
}

/// Percent rows through the shared effect formatter; coefficients with
/// two decimals.
pub fn format_row(row: &ForestRow) -> String {
    match row.scale {
        Scale::Percent => format_effect(&row.summary()),
        Scale::Coefficient => format!("{:.2} (95% CrI: {:.2}–{:.2})", row.mean, row.cri95_lo, row.cri95_hi),
    }
}

pub fn print_fit(title: &str, fit: &Fit) {
    let r = &fit.report;
    println!("== {title} ==");
    let width = r.forest.iter().map(|f| f.label.len()).max().unwrap_or(0);
    for f in &r.forest {
        println!("  {:<width$}  {}", f.label, format_row(f));
    }
    print!("{}", indent(&r.verdict.to_string()));
}

pub fn indent(text: &str) -> String {
    text.lines().map(|l| format!("  {l}\n")).collect()
}
