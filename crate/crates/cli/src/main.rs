//! `swissmob`: reproducible runs of the mobility and case-growth models.
//!
//! Exit codes: 0 success, 1 a run finished with model warnings (divergent
//! transitions, poor convergence, influential observations), 2 usage, input
//! or output errors.

mod commands;
mod config;
mod error;
mod output;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swissmob::MobilityVar;

use crate::config::{parse_lags, RunConfig};
use crate::error::Result;

#[derive(Parser, Debug)]
#[command(name = "swissmob", version, about = "Mobility panels, policy-effect models and diagnostics on synthetic Swiss data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Run configuration (TOML) or the manifest of an earlier run.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; every stage derives its own seed from it.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Directory with the panel tables (trips, cases, policies, population, tests).
    #[arg(long, global = true, value_name = "DIR")]
    panel: Option<PathBuf>,
    /// Bundled scenario name or scenario file.
    #[arg(long, global = true, value_name = "NAME|PATH")]
    scenario: Option<String>,
    /// Lag range of the cases model, inclusive.
    #[arg(long, global = true, value_name = "A:B")]
    lags: Option<String>,
    /// Mobility variable (total, train, road, highway, commuter, noncommuter).
    #[arg(long, global = true, value_name = "K")]
    variable: Option<MobilityVar>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    #[arg(long, global = true)]
    warmup: Option<usize>,
    #[arg(long, global = true)]
    samples: Option<usize>,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Simulate pings for a scenario and derive the trip panel.
    Simulate,
    /// Validate panel tables and write the merged canton-day panel.
    BuildPanel,
    /// Policy effects on mobility.
    FitMobility,
    /// Case growth on lagged mobility, one fit per lag.
    FitCases,
    /// Direct and mobility-mediated policy effects on case growth.
    Mediate,
    /// Mobility model with spatially structured canton effects.
    FitSpatial,
    /// Several mobility variables with correlated canton effects.
    FitJoint,
    /// Alternative time trends and the tests control.
    Robustness,
    /// Predictive checks, Pareto shapes and policy correlations of a finished run.
    Diagnose {
        /// Run directory (containing manifest.toml).
        run: PathBuf,
    },
    /// Merge all runs below a directory into one table and narrative.
    Report {
        /// Directory searched for run manifests.
        runs: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::BuildPanel => "build-panel",
            Command::FitMobility => "fit-mobility",
            Command::FitCases => "fit-cases",
            Command::Mediate => "mediate",
            Command::FitSpatial => "fit-spatial",
            Command::FitJoint => "fit-joint",
            Command::Robustness => "robustness",
            Command::Diagnose { .. } => "diagnose",
            Command::Report { .. } => "report",
        }
    }
}

/// Whether a finished command should exit with the warning code.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Outcome {
    pub warnings: bool,
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = Some(s);
    }
    if let Some(d) = &common.panel {
        cfg.panel.dir = Some(d.clone());
    }
    if let Some(s) = &common.scenario {
        cfg.simulate.scenario = s.clone();
        cfg.simulate.scenario_toml = None;
    }
    if let Some(l) = &common.lags {
        parse_lags(l)?;
        cfg.model.lags = Some(l.clone());
    }
    if let Some(v) = common.variable {
        cfg.model.variable = v;
    }
    cfg.sampler.chains = common.chains.or(cfg.sampler.chains);
    cfg.sampler.warmup = common.warmup.or(cfg.sampler.warmup);
    cfg.sampler.samples = common.samples.or(cfg.sampler.samples);
    Ok(cfg)
}

fn run(mut cli: Cli) -> Result<Outcome> {
    // a finished run is diagnosed with its own configuration
    if let (Command::Diagnose { run }, None) = (&cli.command, &cli.common.config) {
        cli.common.config = Some(run.join(swissmob::io::MANIFEST_FILE));
    }
    let cfg = resolve(&cli.common)?;
    let out = |default: &str| cli.common.out.clone().unwrap_or_else(|| PathBuf::from(default));
    log::info!("running {}", cli.command.name());
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &out("simulated")),
        Command::BuildPanel => commands::build_panel(&cfg, &out("panel")),
        Command::FitMobility => commands::fit_mobility(&cfg, &out("runs/mobility")),
        Command::FitCases => commands::fit_cases(&cfg, &out("runs/cases")),
        Command::Mediate => commands::mediate(&cfg, &out("runs/mediation")),
        Command::FitSpatial => commands::fit_spatial(&cfg, &out("runs/spatial")),
        Command::FitJoint => commands::fit_joint(&cfg, &out("runs/joint")),
        Command::Robustness => commands::robustness(&cfg, &out("runs/robustness")),
        Command::Diagnose { run } => {
            let dest = cli.common.out.clone().unwrap_or_else(|| run.join("diagnostics"));
            commands::diagnose(&cfg, &run, &dest)
        }
        Command::Report { runs } => {
            let dest = cli.common.out.clone().unwrap_or_else(|| runs.clone());
            report::report(&runs, &dest)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Outcome { warnings: false }) => ExitCode::SUCCESS,
        Ok(Outcome { warnings: true }) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
