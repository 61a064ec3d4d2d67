//! Model runs: compile a spec, sample it, and attach summaries, sampler
//! telemetry, diagnostics verdicts and forest-plot rows.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{
    loo_pareto_k, summarize, telemetry_summary, verdict, DiagnosticsError, ParetoKReport, SummaryRow,
    TelemetrySummary, Verdict,
};
use crate::inference::{sample, Draws, InferenceError, SamplerConfig};
use crate::model::{percent_change, summarize_effect, EffectSummary, ModelError, ModelKind, ModelSpec, PanelModel};
use crate::panel::{Measure, MobilityVar, PanelDataset};

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

/// Whether a forest row is on the percentage or the coefficient scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Percent,
    Coefficient,
}

/// One row of forest-plot data: a policy or a lag with its posterior
/// mean and central intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestRow {
    pub model: String,
    pub label: String,
    pub parameter: String,
    pub scale: Scale,
    pub mean: f64,
    pub cri80_lo: f64,
    pub cri80_hi: f64,
    pub cri95_lo: f64,
    pub cri95_hi: f64,
}

impl ForestRow {
    pub fn new(model: &str, label: &str, parameter: &str, scale: Scale, s: &EffectSummary) -> Self {
        Self {
            model: model.to_string(),
            label: label.to_string(),
            parameter: parameter.to_string(),
            scale,
            mean: s.mean,
            cri80_lo: s.cri80.0,
            cri80_hi: s.cri80.1,
            cri95_lo: s.cri95.0,
            cri95_hi: s.cri95.1,
        }
    }

    pub fn summary(&self) -> EffectSummary {
        EffectSummary {
            mean: self.mean,
            cri80: (self.cri80_lo, self.cri80_hi),
            cri95: (self.cri95_lo, self.cri95_hi),
        }
    }

    /// Whether the 95% interval excludes zero.
    pub fn excludes_zero(&self) -> bool {
        self.cri95_lo > 0.0 || self.cri95_hi < 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub spec: ModelSpec,
    pub sampler: SamplerConfig,
    pub summary: Vec<SummaryRow>,
    pub telemetry: Vec<TelemetrySummary>,
    pub pareto: Option<ParetoKReport>,
    pub verdict: Verdict,
    pub forest: Vec<ForestRow>,
    pub seconds: f64,
}

impl FitReport {
    pub fn row(&self, name: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.name == name)
    }

    pub fn divergences(&self) -> usize {
        self.telemetry.iter().map(|t| t.divergences).sum()
    }
}

/// A completed run.
#[derive(Clone, Debug)]
pub struct Fit {
    pub model: PanelModel,
    pub draws: Draws,
    pub report: FitReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FitOptions {
    /// Leave-one-out Pareto tail shapes for every observation.
    pub pareto: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { pareto: true }
    }
}

/// Compiles, samples and summarizes one model.
pub fn run_model(spec: &ModelSpec, panel: &PanelDataset, config: &SamplerConfig) -> Result<Fit, FitError> {
    run_model_with(spec, panel, config, FitOptions::default())
}

pub fn run_model_with(
    spec: &ModelSpec,
    panel: &PanelDataset,
    config: &SamplerConfig,
    options: FitOptions,
) -> Result<Fit, FitError> {
    let model = PanelModel::new(spec, panel)?;
    fit_compiled(model, config, options)
}

/// Samples an already compiled model.
pub fn fit_compiled(model: PanelModel, config: &SamplerConfig, options: FitOptions) -> Result<Fit, FitError> {
    let start = Instant::now();
    let draws = sample(&model, config)?;
    if draws.all_divergent() {
        log::warn!("{}: every post-warm-up transition diverged", model.spec());
    }
    let summary = summarize(&draws);
    let telemetry = telemetry_summary(&draws, config.max_tree_depth);
    let pareto = if options.pareto { Some(loo_pareto_k(&draws, &model)?) } else { None };
    let verdict = verdict(&summary, &telemetry, pareto.as_ref());
    let forest = forest_rows(model.spec(), &draws);
    let report = FitReport {
        spec: model.spec().clone(),
        sampler: *config,
        summary,
        telemetry,
        pareto,
        verdict,
        forest,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(Fit { model, draws, report })
}

/// Refits the cases model once per lag; lags are never combined.
pub fn fit_cases_lags(
    panel: &PanelDataset,
    k: MobilityVar,
    lags: &[u32],
    config: &SamplerConfig,
    options: FitOptions,
) -> Result<Vec<Fit>, FitError> {
    lags.iter().map(|&s| run_model_with(&ModelSpec::cases(k, s), panel, config, options)).collect()
}

/// Forest-plot rows of the headline effects of a spec: policies on the
/// percentage scale, mobility elasticities on the coefficient scale.
pub fn forest_rows(spec: &ModelSpec, draws: &Draws) -> Vec<ForestRow> {
    let model = spec.to_string();
    let mut out = Vec::new();
    let mut push = |param: String, label: String, scale: Scale| {
        if let Some(v) = draws.pooled(&param) {
            let v: Vec<f64> = match scale {
                Scale::Percent => v.into_iter().map(percent_change).collect(),
                Scale::Coefficient => v,
            };
            out.push(ForestRow::new(&model, &label, &param, scale, &summarize_effect(&v)));
        }
    };
    let policies = |base: &str, tag: &str| -> Vec<(String, String)> {
        Measure::ALL
            .iter()
            .enumerate()
            .map(|(l, m)| (format!("{base}[{tag}{}]", l + 1), m.label().to_string()))
            .collect()
    };
    let lag = spec.lag.unwrap_or(0);
    match spec.kind {
        ModelKind::Mobility if spec.extensions.joint_multivariate => {
            for v in &spec.variables {
                for (p, l) in policies("beta", &format!("{},", v.name())) {
                    push(p, format!("{l} ({})", v.name()), Scale::Percent);
                }
            }
        }
        ModelKind::Mobility => {
            for (p, l) in policies("beta", "") {
                push(p, l, Scale::Percent);
            }
        }
        ModelKind::Cases => push("xi".into(), format!("lag {lag}"), Scale::Coefficient),
        ModelKind::MediationMediator => {
            for (p, l) in policies("beta", "") {
                push(p, l, Scale::Percent);
            }
        }
        ModelKind::MediationOutcome => {
            for (p, l) in policies("lambda", "") {
                push(p, l, Scale::Percent);
            }
            push("psi".into(), format!("lag {lag}"), Scale::Coefficient);
        }
        ModelKind::Mediation => {
            for (p, l) in policies("beta_m", "") {
                push(p, format!("{l} (mobility)"), Scale::Percent);
            }
            for (p, l) in policies("lambda_y", "") {
                push(p, format!("{l} (direct)"), Scale::Percent);
            }
            push("psi_y".into(), format!("lag {lag}"), Scale::Coefficient);
        }
    }
    out
}

/// Default sampler settings for a spec: the full-length iteration counts
/// with a given seed.
pub fn default_config(spec: &ModelSpec, seed: u64) -> SamplerConfig {
    let (warmup, samples) = spec.default_iterations();
    SamplerConfig { warmup, samples, seed, ..SamplerConfig::default() }
}

