//! Mediation of policy effects on cases through mobility: joint fit of the
//! mediator and outcome equations, product-method decomposition, the
//! residual-correlation sensitivity analysis and the interaction check.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fit::{fit_compiled, run_model_with, Fit, FitError, FitOptions};
use crate::inference::SamplerConfig;
use crate::math::{pearson, quantile};
use crate::model::{nb_sample, percent_change, summarize_effect, EffectSummary, ModelKind, ModelSpec, PanelModel};
use crate::panel::{Measure, MobilityVar, PanelDataset};

/// Log-scale effect draws of one policy.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyMediation {
    pub measure: Measure,
    /// `λ_l`
    pub direct: Vec<f64>,
    /// `β_l·ψ`, stored as `total − direct` so the decomposition is exact.
    pub indirect: Vec<f64>,
    /// `λ_l + β_l·ψ`
    pub total: Vec<f64>,
}

impl PolicyMediation {
    fn summary(v: &[f64]) -> EffectSummary {
        let pct: Vec<f64> = v.iter().copied().map(percent_change).collect();
        summarize_effect(&pct)
    }

    pub fn direct_summary(&self) -> EffectSummary {
        Self::summary(&self.direct)
    }

    pub fn indirect_summary(&self) -> EffectSummary {
        Self::summary(&self.indirect)
    }

    pub fn total_summary(&self) -> EffectSummary {
        Self::summary(&self.total)
    }
}

#[derive(Clone, Debug)]
pub struct MediationResult {
    pub variable: MobilityVar,
    pub lag: u32,
    pub policies: Vec<PolicyMediation>,
    pub fit: Fit,
}

/// Per-draw decomposition from the joint mediation draws.
pub fn decompose(fit: &Fit) -> Vec<PolicyMediation> {
    let d = &fit.draws;
    let psi = d.pooled("psi_y").expect("mediation draws carry psi_y");
    Measure::ALL
        .iter()
        .enumerate()
        .map(|(l, &measure)| {
            let beta = d.pooled(&format!("beta_m[{}]", l + 1)).expect("beta_m");
            let direct = d.pooled(&format!("lambda_y[{}]", l + 1)).expect("lambda_y");
            let total: Vec<f64> = direct.iter().zip(&beta).zip(&psi).map(|((lam, b), p)| lam + b * p).collect();
            let indirect = total.iter().zip(&direct).map(|(t, lam)| t - lam).collect();
            PolicyMediation { measure, direct, indirect, total }
        })
        .collect()
}

pub fn fit_mediation(
    panel: &PanelDataset,
    k: MobilityVar,
    s: u32,
    config: &SamplerConfig,
    options: FitOptions,
) -> Result<MediationResult, FitError> {
    let fit = run_model_with(&ModelSpec::mediation(k, s), panel, config, options)?;
    Ok(MediationResult { variable: k, lag: s, policies: decompose(&fit), fit })
}

/// Distribution of the correlation between the two equations' predictive
/// errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub correlations: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl SensitivityReport {
    pub fn covers_zero(&self) -> bool {
        self.lo <= 0.0 && self.hi >= 0.0
    }
}

/// For `n_draws` posterior draws (cycled when fewer were stored),
/// simulates one replicate of each equation and correlates the predictive
/// errors `y − y_rep` across rows.
pub fn mediation_sensitivity<R: Rng + ?Sized>(result: &MediationResult, n_draws: usize, rng: &mut R) -> SensitivityReport {
    let model: &PanelModel = &result.fit.model;
    let draws = &result.fit.draws;
    let total = draws.chains() * draws.iterations();
    let eqs = model.equations();
    let (ym, yy) = (&eqs[0].y, &eqs[1].y);
    let mut correlations = Vec::with_capacity(n_draws);
    for k in 0..n_draws {
        let j = k % total;
        let means = model.means(draws.row(j / draws.iterations(), j % draws.iterations()));
        let err = |y: &[u64], mu: &[f64], zeta: f64, rng: &mut R| -> Vec<f64> {
            y.iter()
                .zip(mu)
                .map(|(&y, &m)| y as f64 - nb_sample(rng, m, zeta) as f64)
                .collect()
        };
        let em = err(ym, &means[0].0, means[0].1, rng);
        let ey = err(yy, &means[1].0, means[1].1, rng);
        correlations.push(pearson(&em, &ey));
    }
    let lo = quantile(&correlations, 0.025);
    let hi = quantile(&correlations, 0.975);
    SensitivityReport { correlations, lo, hi }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionRow {
    pub measure: Measure,
    pub mean: f64,
    pub cri95: (f64, f64),
    pub covers_zero: bool,
    /// `|mean|` below the threshold in prior standard deviations.
    pub close_to_zero: bool,
}

#[derive(Clone, Debug)]
pub struct InteractionReport {
    pub rows: Vec<InteractionRow>,
    pub fit: Fit,
}

/// Prior SD of the interaction coefficients.
pub const INTERACTION_PRIOR_SD: f64 = 1.0;

/// Refits the outcome equation with policy × lagged-mobility interactions.
/// `threshold_sd` sets "close to zero" in prior SDs (0.5 by convention).
pub fn interaction_check(
    panel: &PanelDataset,
    k: MobilityVar,
    s: u32,
    config: &SamplerConfig,
    threshold_sd: f64,
) -> Result<InteractionReport, FitError> {
    let mut spec = ModelSpec { kind: ModelKind::MediationOutcome, ..ModelSpec::mediation(k, s) };
    spec.extensions.interaction = true;
    let model = PanelModel::new(&spec, panel)?;
    let fit = fit_compiled(model, config, FitOptions { pareto: false })?;
    let rows = Measure::ALL
        .iter()
        .enumerate()
        .map(|(l, &measure)| {
            let v = fit.draws.pooled(&format!("interaction[{}]", l + 1)).expect("interaction names");
            let s = summarize_effect(&v);
            InteractionRow {
                measure,
                mean: s.mean,
                cri95: s.cri95,
                covers_zero: s.cri95.0 <= 0.0 && s.cri95.1 >= 0.0,
                close_to_zero: s.mean.abs() < threshold_sd * INTERACTION_PRIOR_SD,
            }
        })
        .collect();
    Ok(InteractionReport { rows, fit })
}
