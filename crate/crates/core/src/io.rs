//! Run artifacts on disk: long-format draws with their telemetry, summary
//! and forest tables, posterior predictive and Pareto diagnostics, and the
//! TOML run manifest.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a
//! draws file back reproduces the in-memory values bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{khat_band, PairCorrelations, ParetoKReport, PpcEquation, SummaryRow};
use crate::fit::ForestRow;
use crate::inference::{Draws, SamplerConfig, Transition};
use crate::model::ModelSpec;

pub const DRAWS_FILE: &str = "draws.csv";
pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const FOREST_FILE: &str = "forest.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Manifest { path: PathBuf, source: toml::de::Error },
    #[error("manifest serialization: {0}")]
    ManifestWrite(#[from] toml::ser::Error),
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format { path: path.to_path_buf(), message: message.into() }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, IoError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err(path))
}

#[derive(Serialize, Deserialize)]
struct DrawRow {
    chain: usize,
    iteration: usize,
    parameter: String,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct TelemetryRow {
    chain: usize,
    iteration: usize,
    divergent: bool,
    tree_depth: u32,
    n_leapfrog: u32,
    accept_stat: f64,
    step_size: f64,
    energy: f64,
}

/// `chain,iteration,parameter,value`, iteration-major within each chain.
pub fn write_draws(draws: &Draws, path: &Path) -> Result<(), IoError> {
    let names = draws.names();
    let rows = (0..draws.chains()).flat_map(|c| {
        (0..draws.iterations()).flat_map(move |i| {
            names.iter().enumerate().map(move |(j, n)| DrawRow {
                chain: c,
                iteration: i,
                parameter: n.clone(),
                value: draws.get(c, i, j),
            })
        })
    });
    write_rows(path, rows)
}

pub fn write_telemetry(draws: &Draws, path: &Path) -> Result<(), IoError> {
    let rows = (0..draws.chains()).flat_map(|c| {
        draws.chain_telemetry(c).iter().enumerate().map(move |(i, t)| TelemetryRow {
            chain: c,
            iteration: i,
            divergent: t.divergent,
            tree_depth: t.tree_depth,
            n_leapfrog: t.n_leapfrog,
            accept_stat: t.accept_stat,
            step_size: t.step_size,
            energy: t.energy,
        })
    });
    write_rows(path, rows)
}

/// Reads draws written by [`write_draws`], with the telemetry file when
/// given. Rows may come in any order but must form a complete grid.
pub fn read_draws(path: &Path, telemetry: Option<&Path>) -> Result<Draws, IoError> {
    let rows: Vec<DrawRow> = read_rows(path)?;
    let mut names: Vec<String> = Vec::new();
    let (mut chains, mut iterations) = (0, 0);
    for r in &rows {
        if !names.contains(&r.parameter) {
            names.push(r.parameter.clone());
        }
        chains = chains.max(r.chain + 1);
        iterations = iterations.max(r.iteration + 1);
    }
    let p = names.len();
    if rows.len() != chains * iterations * p {
        return Err(format_err(path, format!("{} rows do not fill {chains} x {iterations} x {p}", rows.len())));
    }
    let mut values = vec![vec![vec![f64::NAN; p]; iterations]; chains];
    let mut seen = vec![false; chains * iterations * p];
    for r in rows {
        let j = names.iter().position(|n| *n == r.parameter).expect("collected above");
        let k = (r.chain * iterations + r.iteration) * p + j;
        if std::mem::replace(&mut seen[k], true) {
            return Err(format_err(path, format!("duplicate {} at chain {} iteration {}", r.parameter, r.chain, r.iteration)));
        }
        values[r.chain][r.iteration][j] = r.value;
    }
    let mut tele: Vec<Vec<Transition>> = Vec::new();
    if let Some(tp) = telemetry {
        let rows: Vec<TelemetryRow> = read_rows(tp)?;
        if rows.len() != chains * iterations {
            return Err(format_err(tp, format!("expected {} transitions, found {}", chains * iterations, rows.len())));
        }
        tele = vec![vec![Transition::default(); iterations]; chains];
        for r in rows {
            if r.chain >= chains || r.iteration >= iterations {
                return Err(format_err(tp, format!("transition ({}, {}) outside the draws", r.chain, r.iteration)));
            }
            tele[r.chain][r.iteration] = Transition {
                divergent: r.divergent,
                tree_depth: r.tree_depth,
                n_leapfrog: r.n_leapfrog,
                accept_stat: r.accept_stat,
                step_size: r.step_size,
                energy: r.energy,
            };
        }
    }
    Ok(Draws::new(names, values, tele))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SummaryCsvRow {
    parameter: String,
    mean: f64,
    sd: f64,
    cri80_lo: f64,
    cri80_hi: f64,
    cri95_lo: f64,
    cri95_hi: f64,
    rhat: f64,
    ess_ratio: f64,
    mcse: f64,
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<(), IoError> {
    write_rows(
        path,
        rows.iter().map(|r| SummaryCsvRow {
            parameter: r.name.clone(),
            mean: r.mean,
            sd: r.sd,
            cri80_lo: r.cri80.0,
            cri80_hi: r.cri80.1,
            cri95_lo: r.cri95.0,
            cri95_hi: r.cri95.1,
            rhat: r.rhat,
            ess_ratio: r.ess_ratio,
            mcse: r.mcse,
        }),
    )
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, IoError> {
    let rows: Vec<SummaryCsvRow> = read_rows(path)?;
    Ok(rows
        .into_iter()
        .map(|r| SummaryRow {
            name: r.parameter,
            mean: r.mean,
            sd: r.sd,
            cri80: (r.cri80_lo, r.cri80_hi),
            cri95: (r.cri95_lo, r.cri95_hi),
            rhat: r.rhat,
            ess_ratio: r.ess_ratio,
            mcse: r.mcse,
        })
        .collect())
}

pub fn write_forest(rows: &[ForestRow], path: &Path) -> Result<(), IoError> {
    write_rows(path, rows)
}

pub fn read_forest(path: &Path) -> Result<Vec<ForestRow>, IoError> {
    read_rows(path)
}

#[derive(Serialize)]
struct PpcRow<'a> {
    outcome: &'a str,
    row: usize,
    replicate: usize,
    chain: usize,
    iteration: usize,
    observed: u64,
    replicated: u64,
}

/// Observed and replicated counts in long format, one line per panel row
/// and replicate, for density overlays.
pub fn write_ppc(eqs: &[PpcEquation], path: &Path) -> Result<(), IoError> {
    let rows = eqs.iter().flat_map(|e| {
        e.replicates.iter().enumerate().flat_map(move |(k, rep)| {
            rep.iter().enumerate().map(move |(i, &v)| PpcRow {
                outcome: &e.outcome,
                row: i,
                replicate: k,
                chain: e.draws[k].0,
                iteration: e.draws[k].1,
                observed: e.observed[i],
                replicated: v,
            })
        })
    });
    write_rows(path, rows)
}

#[derive(Serialize)]
struct ParetoRow {
    observation: usize,
    khat: f64,
    band: &'static str,
}

pub fn write_pareto(report: &ParetoKReport, path: &Path) -> Result<(), IoError> {
    write_rows(
        path,
        report.khat.iter().enumerate().map(|(i, &k)| ParetoRow { observation: i, khat: k, band: khat_band(k) }),
    )
}

#[derive(Serialize)]
struct PairRow<'a> {
    a: &'a str,
    b: &'a str,
    correlation: f64,
}

/// The correlation table, plus the pooled draws behind it (one column per
/// parameter) for pairwise scatter plots.
pub fn write_correlations(c: &PairCorrelations, table: &Path, scatter: &Path) -> Result<(), IoError> {
    write_rows(table, c.pairs().into_iter().map(|(i, j, r)| PairRow { a: &c.names[i], b: &c.names[j], correlation: r }))?;
    let mut w = csv::Writer::from_path(scatter).map_err(csv_err(scatter))?;
    w.write_record(&c.names).map_err(csv_err(scatter))?;
    let n = c.values.first().map_or(0, |v| v.len());
    for d in 0..n {
        w.write_record(c.values.iter().map(|v| v[d].to_string())).map_err(csv_err(scatter))?;
    }
    w.flush().map_err(|source| IoError::File { path: scatter.to_path_buf(), source })
}

/// Everything needed to rerun a command: the command, its full
/// configuration, the master seed and the code version. No wall-clock
/// fields, so reruns write identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Output files relative to the run directory.
    #[serde(default)]
    pub outputs: Vec<String>,
    /// Conventions and assumptions a reader of the outputs should know.
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub warmup_divergences: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ModelSpec>,
    /// The command's own configuration section.
    #[serde(default)]
    pub config: toml::Table,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            tool: "swissmob".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            outputs: Vec::new(),
            notes: Vec::new(),
            warmup_divergences: Vec::new(),
            sampler: None,
            spec: None,
            config: toml::Table::new(),
        }
    }

    pub fn to_toml(&self) -> Result<String, IoError> {
        Ok(toml::to_string(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        fs::write(path, self.to_toml()?).map_err(|source| IoError::File { path: path.to_path_buf(), source })
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })?;
        toml::from_str(&text).map_err(|source| IoError::Manifest { path: path.to_path_buf(), source })
    }
}

/// Writes draws and telemetry into `dir` under the standard names and
/// records the warm-up divergence counts in the manifest.
pub fn save_draws(draws: &Draws, dir: &Path, manifest: &mut RunManifest) -> Result<(), IoError> {
    write_draws(draws, &dir.join(DRAWS_FILE))?;
    write_telemetry(draws, &dir.join(TELEMETRY_FILE))?;
    manifest.warmup_divergences = draws.warmup_divergences().to_vec();
    for f in [DRAWS_FILE, TELEMETRY_FILE] {
        if !manifest.outputs.iter().any(|o| o == f) {
            manifest.outputs.push(f.into());
        }
    }
    Ok(())
}

/// Inverse of [`save_draws`].
pub fn load_draws(dir: &Path, manifest: &RunManifest) -> Result<Draws, IoError> {
    let tele = dir.join(TELEMETRY_FILE);
    let draws = read_draws(&dir.join(DRAWS_FILE), tele.exists().then_some(tele.as_path()))?;
    Ok(draws.with_warmup_divergences(manifest.warmup_divergences.clone()))
}
