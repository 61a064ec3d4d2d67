//! One function per subcommand. Each writes its outputs and a manifest into
//! the output directory and prints a short summary.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use swissmob::diagnostics::{
    loo_pareto_k, policy_pair_correlations, posterior_predictive, summarize, telemetry_summary, verdict,
};
use swissmob::extensions::{
    fit_joint_mobility, fit_mediation, fit_spatial_mobility, robustness_suite, spatial_model, Adjacency,
};
use swissmob::fit::{run_model_with, Fit, FitOptions};
use swissmob::io::{self, RunManifest, FOREST_FILE, MANIFEST_FILE, SUMMARY_FILE};
use swissmob::model::{summarize_effect, EffectSummary};
use swissmob::panel::load_panel;
use swissmob::telecom::{comparison_weeks, policy_reduction, run_pipeline, Scenario};
use swissmob::{Measure, MobilityVar, ModelSpec, PanelDataset, PanelModel, TimeSpec};

use crate::config::{sub_seed, RunConfig, STAGE_PIPELINE, STAGE_PPC};
use crate::error::{CliError, Result};
use crate::output::*;
use crate::Outcome;

pub const PIPELINE_SUMMARY_FILE: &str = "pipeline_summary.toml";
pub const PANEL_FILE: &str = "panel.csv";

pub const DID_CAVEAT: &str = "Policy effects are identified from the staggered timing of measures across \
cantons (difference-in-differences). A causal reading assumes parallel trends in mobility between cantons \
in the absence of the measures and no anticipation of them; measures introduced on the same day in every \
canton cannot be told apart.";

fn manifest(command: &str, cfg: &RunConfig) -> Result<RunManifest> {
    let mut m = RunManifest::new(command, cfg.seed());
    m.config = cfg.for_manifest(None)?;
    Ok(m)
}

fn load(cfg: &RunConfig) -> Result<PanelDataset> {
    let panel = load_panel(&cfg.panel.sources()?, &cfg.panel.load_options())?;
    for w in panel.warnings() {
        log::warn!("{w}");
    }
    Ok(panel)
}

fn options(cfg: &RunConfig) -> FitOptions {
    FitOptions { pareto: cfg.model.pareto }
}

fn adjacency(cfg: &RunConfig) -> Result<Adjacency> {
    match &cfg.spatial.adjacency {
        Some(p) if !p.is_file() => Err(CliError::path(p, "adjacency file not found")),
        Some(p) => Adjacency::from_csv(p).map_err(|e| CliError::path(p, e)),
        None => Ok(Adjacency::swiss()),
    }
}

fn outcome(fits: &[&Fit]) -> Outcome {
    Outcome { warnings: fits.iter().any(|f| !f.report.verdict.all_pass()) }
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let sc = cfg.simulate.scenario_config()?;
    let scenario = Scenario::from_config(sc.clone())?;
    let seed = cfg.seed();
    let output = run_pipeline(&scenario, sub_seed(seed, STAGE_PIPELINE), cfg.simulate.keep_pings)?;
    create_dir(out)?;
    let written = output.write(&scenario, out).map_err(|e| CliError::path(out, e))?;
    let s = &output.summary;
    let summary = toml::to_string(s).map_err(|e| CliError::path(out.join(PIPELINE_SUMMARY_FILE), e))?;
    write_text(&out.join(PIPELINE_SUMMARY_FILE), &summary)?;

    let mut m = RunManifest::new("simulate", seed);
    m.config = cfg.for_manifest(Some(&sc))?;
    for p in &written {
        push_output(&mut m, &p.file_name().unwrap_or_default().to_string_lossy());
    }
    push_output(&mut m, PIPELINE_SUMMARY_FILE);
    let (base, post) = comparison_weeks();
    let reduction = 100.0 * policy_reduction(&output.records);
    m.notes.push(format!("weekly reduction compares the weeks starting {base} and {post}"));
    m.write(&out.join(MANIFEST_FILE))?;

    println!("scenario {} ({} days from {})", sc.name, sc.days, sc.start);
    println!("devices {}", s.devices);
    println!("pings {}", s.pings);
    println!("trips {} detected, {} simulated", s.trips, s.true_trips);
    let shares = |m: &std::collections::BTreeMap<String, f64>| {
        m.iter().map(|(k, v)| format!("{k} {:.1}%", 100.0 * v)).collect::<Vec<_>>().join(", ")
    };
    println!("mode shares: {}", shares(&s.mode_shares));
    println!("purpose shares: {}", shares(&s.purpose_shares));
    if reduction.is_finite() {
        println!("weekly trip reduction {reduction:.1}% (week of {post} vs week of {base})");
    } else {
        println!("weekly trip reduction n/a (the scenario does not cover the weeks of {base} and {post})");
    }
    println!("wrote {}", out.display());
    Ok(Outcome::default())
}

pub fn build_panel(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let panel = load(cfg)?;
    create_dir(out)?;
    let path = out.join(PANEL_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::path(&path, e))?;
    let mut header = vec!["canton".to_string(), "date".into(), "weekday".into()];
    header.extend(MobilityVar::ALL.iter().map(|v| v.name().to_string()));
    header.extend(["new_cases", "cumulative_cases"].map(String::from));
    header.extend(Measure::ALL.iter().map(|m| m.name().to_string()));
    header.extend(["q", "z", "log_population", "est_tests"].map(String::from));
    w.write_record(&header).map_err(|e| CliError::path(&path, e))?;
    for r in panel.rows() {
        let mut rec = vec![r.canton.code().to_string(), r.date.to_string(), r.weekday.to_string()];
        rec.extend(r.mobility.iter().map(u64::to_string));
        rec.extend([r.new_cases.to_string(), r.cumulative_cases.to_string()]);
        rec.extend(r.policy.iter().map(|&b| u8::from(b).to_string()));
        rec.extend([r.q.to_string(), r.z.to_string(), r.log_population.to_string()]);
        rec.push(r.est_tests.map(|t| t.to_string()).unwrap_or_default());
        w.write_record(&rec).map_err(|e| CliError::path(&path, e))?;
    }
    w.flush().map_err(|e| CliError::path(&path, e))?;

    let mut m = manifest("build-panel", cfg)?;
    push_output(&mut m, PANEL_FILE);
    m.notes.extend(panel.warnings().iter().cloned());
    m.write(&out.join(MANIFEST_FILE))?;

    let (a, b) = panel.mobility_window();
    println!("cantons {}", panel.cantons().len());
    println!("dates {} to {}", panel.dates()[0], panel.dates()[panel.dates().len() - 1]);
    println!("mobility rows {} ({a} to {b})", panel.mobility_rows().count());
    println!("cases rows {} (to {})", panel.cases_rows().count(), panel.cases_window_end());
    for w in panel.warnings() {
        println!("warning: {w}");
    }
    println!("wrote {}", path.display());
    Ok(Outcome::default())
}

pub fn fit_mobility(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let panel = load(cfg)?;
    let spec = cfg.model.mobility_spec();
    let sampler = cfg.sampler.resolve(&spec, cfg.seed());
    println!("{DID_CAVEAT}\n");
    let fit = run_model_with(&spec, &panel, &sampler, options(cfg))?;
    let mut m = manifest("fit-mobility", cfg)?;
    m.notes.push(DID_CAVEAT.into());
    write_fit(out, &fit, &mut m)?;
    print_fit(&format!("mobility: {}", spec.variable()), &fit);
    Ok(outcome(&[&fit]))
}

pub fn fit_cases(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let panel = load(cfg)?;
    let lags = cfg.model.lags()?;
    let mut top = manifest("fit-cases", cfg)?;
    let mut fits = Vec::new();
    let mut forest = Vec::new();
    for &s in &lags {
        let spec = cfg.model.cases_spec(s);
        let sampler = cfg.sampler.resolve(&spec, cfg.seed());
        let fit = run_model_with(&spec, &panel, &sampler, options(cfg))?;
        // each lag is a run of its own, rerunnable from its manifest
        let mut single = cfg.clone();
        single.model.lag = s;
        single.model.lags = None;
        let mut m = manifest("fit-cases", &single)?;
        let name = format!("lag_{s:02}");
        write_fit(&out.join(&name), &fit, &mut m)?;
        push_output(&mut top, &name);
        print_fit(&format!("cases: {} lagged {s} days", spec.variable()), &fit);
        forest.extend(fit.report.forest.iter().cloned());
        fits.push(fit);
    }
    io::write_forest(&forest, &out.join(FOREST_FILE))?;
    push_output(&mut top, FOREST_FILE);
    top.write(&out.join(MANIFEST_FILE))?;
    Ok(outcome(&fits.iter().collect::<Vec<_>>()))
}

#[derive(Serialize)]
struct EffectRow<'a> {
    measure: &'a str,
    effect: &'a str,
    mean: f64,
    cri80_lo: f64,
    cri80_hi: f64,
    cri95_lo: f64,
    cri95_hi: f64,
}

impl<'a> EffectRow<'a> {
    fn new(measure: &'a str, effect: &'a str, s: &EffectSummary) -> Self {
        Self {
            measure,
            effect,
            mean: s.mean,
            cri80_lo: s.cri80.0,
            cri80_hi: s.cri80.1,
            cri95_lo: s.cri95.0,
            cri95_hi: s.cri95.1,
        }
    }
}

pub const DECOMPOSITION_FILE: &str = "decomposition.csv";
pub const CORRELATIONS_FILE: &str = "effect_correlations.csv";

pub fn mediate(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let panel = load(cfg)?;
    let (k, s) = (cfg.model.variable, cfg.model.lag);
    let sampler = cfg.sampler.resolve(&ModelSpec::mediation(k, s), cfg.seed());
    let res = fit_mediation(&panel, k, s, &sampler, options(cfg))?;
    let mut m = manifest("mediate", cfg)?;
    m.notes.push("indirect effects are total minus direct per draw, so the decomposition is exact".into());
    let summaries: Vec<_> = res
        .policies
        .iter()
        .map(|p| (p.measure, p.direct_summary(), p.indirect_summary(), p.total_summary()))
        .collect();
    let rows: Vec<EffectRow> = summaries
        .iter()
        .flat_map(|(msr, d, i, t)| {
            [EffectRow::new(msr.name(), "direct", d), EffectRow::new(msr.name(), "indirect", i), EffectRow::new(msr.name(), "total", t)]
        })
        .collect();
    create_dir(out)?;
    write_csv(&out.join(DECOMPOSITION_FILE), &rows)?;
    push_output(&mut m, DECOMPOSITION_FILE);
    write_fit(out, &res.fit, &mut m)?;

    print_fit(&format!("mediation: {k} lagged {s} days"), &res.fit);
    println!("== decomposition (percent change in new cases) ==");
    for (msr, d, i, t) in &summaries {
        println!("  {}", msr.label());
        for (name, e) in [("direct", d), ("indirect", i), ("total", t)] {
            println!("    {name:<9} {}", swissmob::model::format_effect(e));
        }
    }
    Ok(outcome(&[&res.fit]))
}

pub fn fit_spatial(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let panel = load(cfg)?;
    let adj = adjacency(cfg)?;
    let k = cfg.model.variable;
    let sampler = cfg.sampler.resolve(&ModelSpec::spatial(k), cfg.seed());
    let fit = fit_spatial_mobility(&panel, &adj, k, &sampler, options(cfg))?;
    let mut m = manifest("fit-spatial", cfg)?;
    m.notes.push(DID_CAVEAT.into());
    write_fit(out, &fit, &mut m)?;
    print_fit(&format!("spatial mobility: {k}"), &fit);
    for name in ["varphi", "tau"] {
        if let Some(r) = fit.report.row(name) {
            println!("  {name} {:.3} (95% CrI: {:.3}–{:.3})", r.mean, r.cri95.0, r.cri95.1);
        }
    }
    Ok(outcome(&[&fit]))
}

#[derive(Serialize)]
struct CorrelationRow<'a> {
    a: &'a str,
    b: &'a str,
    source: &'a str,
    mean: f64,
    cri95_lo: f64,
    cri95_hi: f64,
}

pub fn fit_joint(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let panel = load(cfg)?;
    let vars = &cfg.model.variables;
    if vars.len() < 2 {
        return Err(CliError::Usage("the joint model needs at least two variables in [model] variables".into()));
    }
    let sampler = cfg.sampler.resolve(&ModelSpec::joint(vars), cfg.seed());
    let joint = fit_joint_mobility(&panel, vars, &sampler, options(cfg))?;
    let mut m = manifest("fit-joint", cfg)?;
    let rows: Vec<CorrelationRow> = joint
        .correlations
        .iter()
        .flat_map(|c| {
            [("model", &c.model), ("pearson", &c.pearson)].map(|(source, s)| CorrelationRow {
                a: c.a.name(),
                b: c.b.name(),
                source,
                mean: s.mean,
                cri95_lo: s.cri95.0,
                cri95_hi: s.cri95.1,
            })
        })
        .collect();
    create_dir(out)?;
    write_csv(&out.join(CORRELATIONS_FILE), &rows)?;
    push_output(&mut m, CORRELATIONS_FILE);
    write_fit(out, &joint.fit, &mut m)?;
    let names: Vec<&str> = vars.iter().map(|v| v.name()).collect();
    print_fit(&format!("joint mobility: {}", names.join(", ")), &joint.fit);
    for c in &joint.correlations {
        println!(
            "  canton effect correlation {}/{}: {:.2} (95% CrI: {:.2}–{:.2})",
            c.a, c.b, c.model.mean, c.model.cri95.0, c.model.cri95.1
        );
    }
    Ok(outcome(&[&joint.fit]))
}

pub fn robustness(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let panel = load(cfg)?;
    let (k, s) = (cfg.model.variable, cfg.model.lag);
    let spec = ModelSpec::mobility(k).with_time_spec(TimeSpec::LinearQuadratic);
    let sampler = cfg.sampler.resolve(&spec, cfg.seed());
    let variants = robustness_suite(&panel, k, s, &sampler)?;
    let mut top = manifest("robustness", cfg)?;
    let mut warnings = false;
    for v in &variants {
        let dir = out.join(v.name);
        create_dir(&dir)?;
        let r = &v.report;
        io::write_summary(&r.summary, &dir.join(SUMMARY_FILE))?;
        io::write_forest(&r.forest, &dir.join(FOREST_FILE))?;
        write_verdict(&dir, &r.verdict)?;
        let mut m = manifest("robustness", cfg)?;
        m.spec = Some(r.spec.clone());
        m.sampler = Some(r.sampler);
        for f in [SUMMARY_FILE, FOREST_FILE, VERDICT_FILE] {
            push_output(&mut m, f);
        }
        m.write(&dir.join(MANIFEST_FILE))?;
        push_output(&mut top, v.name);
        warnings |= !r.verdict.all_pass();

        println!("== {} ==", v.name);
        for f in &r.forest {
            println!("  {:<12} {}", f.label, format_row(f));
        }
        print!("{}", indent(&r.verdict.to_string()));
    }
    top.notes.push(format!("all variants share the sampler settings {sampler:?}"));
    top.write(&out.join(MANIFEST_FILE))?;
    Ok(Outcome { warnings })
}

pub const PPC_FILE: &str = "ppc.csv";
pub const POLICY_CORRELATIONS_FILE: &str = "policy_correlations.csv";
pub const POLICY_SCATTER_FILE: &str = "policy_scatter.csv";

pub fn diagnose(cfg: &RunConfig, run: &Path, out: &Path) -> Result<Outcome> {
    let mp = run.join(MANIFEST_FILE);
    if !mp.is_file() {
        return Err(CliError::path(&mp, "run manifest not found"));
    }
    let rm = RunManifest::read(&mp)?;
    let spec = rm
        .spec
        .clone()
        .ok_or_else(|| CliError::path(&mp, "not a fitted run (no model spec); diagnose a run directory such as lag_07"))?;
    let draws = io::load_draws(run, &rm)?;
    let panel = load(cfg)?;
    let model = if spec.extensions.spatial_bym2 {
        spatial_model(&panel, &adjacency(cfg)?, spec.variable())?
    } else {
        PanelModel::new(&spec, &panel)?
    };
    create_dir(out)?;
    let mut m = RunManifest::new("diagnose", rm.seed);
    m.config = cfg.for_manifest(None)?;
    m.notes.push(format!("diagnostics of {}", std::path::absolute(run).unwrap_or(run.to_path_buf()).display()));

    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(rm.seed, STAGE_PPC));
    let eqs = posterior_predictive(&draws, &model, cfg.diagnose.replicates, &mut rng)?;
    io::write_ppc(&eqs, &out.join(PPC_FILE))?;
    push_output(&mut m, PPC_FILE);
    let pk = loo_pareto_k(&draws, &model)?;
    io::write_pareto(&pk, &out.join(PARETO_FILE))?;
    push_output(&mut m, PARETO_FILE);
    let corr = policy_pair_correlations(&draws);
    if !corr.names.is_empty() {
        io::write_correlations(&corr, &out.join(POLICY_CORRELATIONS_FILE), &out.join(POLICY_SCATTER_FILE))?;
        push_output(&mut m, POLICY_CORRELATIONS_FILE);
        push_output(&mut m, POLICY_SCATTER_FILE);
    }
    let depth = rm.sampler.map_or(10, |s| s.max_tree_depth);
    let v = verdict(&summarize(&draws), &telemetry_summary(&draws, depth), Some(&pk));
    write_verdict(out, &v)?;
    push_output(&mut m, VERDICT_FILE);
    m.write(&out.join(MANIFEST_FILE))?;

    println!("== diagnostics: {} ==", run.display());
    for e in &eqs {
        let obs = e.observed.iter().sum::<u64>() as f64 / e.observed.len().max(1) as f64;
        let reps = summarize_effect(&e.replicate_means());
        println!(
            "  {}: observed mean {obs:.1}, replicated {:.1} (95%: {:.1}–{:.1}) over {} replicates",
            e.outcome,
            reps.mean,
            reps.cri95.0,
            reps.cri95.1,
            e.replicates.len()
        );
    }
    println!("  Pareto k: {} good, {} ok, {} bad", pk.bands[0], pk.bands[1], pk.bands[2]);
    if let Some((i, j, r)) = corr.pairs().into_iter().max_by(|a, b| a.2.abs().total_cmp(&b.2.abs())) {
        println!("  strongest policy correlation {} / {}: {r:.2}", corr.names[i], corr.names[j]);
    }
    print!("{}", indent(&v.to_string()));
    Ok(Outcome { warnings: !v.all_pass() })
}
