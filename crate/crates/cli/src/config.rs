//! Run configuration: a TOML file with one section per stage, overridden by
//! command-line flags. The resolved configuration is written into every
//! run's manifest, and a manifest is accepted wherever a config file is.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use swissmob::fit::default_config;
use swissmob::panel::{LoadOptions, PanelSources};
use swissmob::telecom::ScenarioConfig;
use swissmob::{MobilityVar, ModelSpec, SamplerConfig, TimeSpec};

use crate::error::{CliError, Result};

pub const DEFAULT_SEED: u64 = 1;

/// Stage streams for [`sub_seed`].
pub const STAGE_PIPELINE: u64 = 1;
pub const STAGE_SAMPLER: u64 = 2;
pub const STAGE_PPC: u64 = 3;

/// Seed of one stage, derived from the master seed so that stages never
/// share a random stream. Kept below 2^63: TOML integers are signed.
pub fn sub_seed(master: u64, stage: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stage);
    rng.next_u64() >> 1
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub simulate: SimulateConfig,
    pub panel: PanelConfig,
    pub model: ModelConfig,
    pub sampler: SamplerOverrides,
    pub spatial: SpatialConfig,
    pub diagnose: DiagnoseConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Bundled scenario name or path to a scenario file.
    pub scenario: String,
    /// The full scenario, inline. Manifests always carry it, so a rerun
    /// does not depend on the original file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario_toml: Option<String>,
    pub keep_pings: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { scenario: "first_wave".into(), scenario_toml: None, keep_pings: false }
    }
}

impl SimulateConfig {
    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        if let Some(text) = &self.scenario_toml {
            return ScenarioConfig::from_toml(text).map_err(|e| CliError::Usage(format!("inline scenario: {e}")));
        }
        let p = Path::new(&self.scenario);
        if p.extension().is_some_and(|e| e == "toml") || p.exists() {
            if !p.is_file() {
                return Err(CliError::path(p, "scenario file not found"));
            }
            return ScenarioConfig::load(p).map_err(|e| CliError::path(p, e));
        }
        Ok(ScenarioConfig::bundled(&self.scenario)?)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelConfig {
    /// Directory holding trips.csv, cases.csv, policies.csv,
    /// population.csv and optionally tests.csv.
    pub dir: Option<PathBuf>,
    pub trips: Option<PathBuf>,
    pub cases: Option<PathBuf>,
    pub policies: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub tests: Option<PathBuf>,
    pub window_start: Option<NaiveDate>,
    pub window_end: Option<NaiveDate>,
    pub cases_window_end: Option<NaiveDate>,
    pub clamp_case_corrections: bool,
}

impl PanelConfig {
    pub fn sources(&self) -> Result<PanelSources> {
        let pick = |explicit: &Option<PathBuf>, name: &str| -> Result<PathBuf> {
            match (explicit, &self.dir) {
                (Some(p), _) => Ok(p.clone()),
                (None, Some(d)) => Ok(d.join(name)),
                (None, None) => Err(CliError::Usage(format!(
                    "no panel input for {name}: pass --panel DIR or set [panel] in the config"
                ))),
            }
        };
        let sources = PanelSources {
            trips: pick(&self.trips, "trips.csv")?,
            cases: pick(&self.cases, "cases.csv")?,
            policies: pick(&self.policies, "policies.csv")?,
            population: pick(&self.population, "population.csv")?,
            tests: match (&self.tests, &self.dir) {
                (Some(p), _) => Some(p.clone()),
                (None, Some(d)) if d.join("tests.csv").is_file() => Some(d.join("tests.csv")),
                _ => None,
            },
        };
        for p in [&sources.trips, &sources.cases, &sources.policies, &sources.population]
            .into_iter()
            .chain(sources.tests.as_ref())
        {
            if !p.is_file() {
                return Err(CliError::path(p, "panel file not found"));
            }
        }
        Ok(sources)
    }

    pub fn load_options(&self) -> LoadOptions {
        let d = LoadOptions::default();
        let window = (self.window_start.unwrap_or(d.mobility_window.0), self.window_end.unwrap_or(d.mobility_window.1));
        LoadOptions {
            mobility_window: window,
            cases_window_end: self.cases_window_end.unwrap_or(window.1),
            clamp_case_corrections: self.clamp_case_corrections,
        }
    }

    /// Paths made absolute so that a manifest works from any directory.
    fn absolutize(&mut self) {
        for p in [&mut self.dir, &mut self.trips, &mut self.cases, &mut self.policies, &mut self.population, &mut self.tests]
            .into_iter()
            .flatten()
        {
            if let Ok(abs) = std::path::absolute(&*p) {
                *p = abs;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variable: MobilityVar,
    /// Equations of the joint multivariate model.
    pub variables: Vec<MobilityVar>,
    /// Lag of the mediation, robustness and single-lag cases runs.
    pub lag: u32,
    /// Lag range `A:B` of fit-cases; `lag` alone when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lags: Option<String>,
    pub time_spec: TimeSpec,
    pub centered: bool,
    pub tests_control: bool,
    /// Leave-one-out Pareto shapes after each fit.
    pub pareto: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variable: MobilityVar::Total,
            variables: vec![MobilityVar::Train, MobilityVar::Road],
            lag: 7,
            lags: None,
            time_spec: TimeSpec::LogTrend,
            centered: false,
            tests_control: false,
            pareto: true,
        }
    }
}

/// Parses `A:B` (inclusive) or a single lag.
pub fn parse_lags(s: &str) -> Result<Vec<u32>> {
    let bad = || CliError::Usage(format!("bad lag range `{s}`, expected A:B such as 7:13"));
    let (a, b) = match s.split_once(':') {
        Some((a, b)) => (a.trim().parse::<u32>().map_err(|_| bad())?, b.trim().parse::<u32>().map_err(|_| bad())?),
        None => {
            let a = s.trim().parse::<u32>().map_err(|_| bad())?;
            (a, a)
        }
    };
    if a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

impl ModelConfig {
    pub fn lags(&self) -> Result<Vec<u32>> {
        match &self.lags {
            Some(s) => parse_lags(s),
            None => Ok(vec![self.lag]),
        }
    }

    fn refine(&self, mut spec: ModelSpec) -> ModelSpec {
        spec.time_spec = self.time_spec;
        spec.centered = self.centered;
        spec
    }

    pub fn mobility_spec(&self) -> ModelSpec {
        self.refine(ModelSpec::mobility(self.variable))
    }

    pub fn cases_spec(&self, lag: u32) -> ModelSpec {
        let mut s = self.refine(ModelSpec::cases(self.variable, lag));
        s.extensions.tests_control = self.tests_control;
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerOverrides {
    pub chains: Option<usize>,
    pub warmup: Option<usize>,
    pub samples: Option<usize>,
    pub target_accept: Option<f64>,
    pub max_tree_depth: Option<u32>,
}

impl SamplerOverrides {
    /// The spec's default settings with the overrides applied.
    pub fn resolve(&self, spec: &ModelSpec, seed: u64) -> SamplerConfig {
        let mut c = default_config(spec, sub_seed(seed, STAGE_SAMPLER));
        c.chains = self.chains.unwrap_or(c.chains);
        c.warmup = self.warmup.unwrap_or(c.warmup);
        c.samples = self.samples.unwrap_or(c.samples);
        c.target_accept = self.target_accept.unwrap_or(c.target_accept);
        c.max_tree_depth = self.max_tree_depth.unwrap_or(c.max_tree_depth);
        c
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialConfig {
    /// Edge list CSV; the bundled Swiss adjacency when absent.
    pub adjacency: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Posterior predictive replicates.
    pub replicates: usize,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self { replicates: 100 }
    }
}

impl RunConfig {
    /// Reads a config file or a run manifest (its `[config]` table).
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::path(path, e))?;
        let mut table: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Config { path: path.into(), message: e.to_string() })?;
        if table.contains_key("tool") {
            let seed = table.get("seed").cloned();
            table = match table.remove("config") {
                Some(toml::Value::Table(t)) => t,
                _ => toml::Table::new(),
            };
            if let Some(s) = seed {
                table.entry("seed").or_insert(s);
            }
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config { path: path.into(), message: e.to_string() })
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    /// The configuration as stored in a manifest: absolute paths and the
    /// scenario inline when the command simulates.
    pub fn for_manifest(&self, inline_scenario: Option<&ScenarioConfig>) -> Result<toml::Table> {
        let mut c = self.clone();
        c.seed = Some(self.seed());
        c.panel.absolutize();
        if let Some(s) = inline_scenario {
            c.simulate.scenario_toml = Some(s.to_toml());
        }
        if let Some(p) = &mut c.spatial.adjacency {
            if let Ok(abs) = std::path::absolute(&*p) {
                *p = abs;
            }
        }
        toml::Table::try_from(&c).map_err(|e| CliError::Usage(format!("config does not serialize: {e}")))
    }
}
