//! BYM2 mobility model and the joint multivariate mobility model.

use crate::fit::{fit_compiled, Fit, FitError, FitOptions};
use crate::inference::SamplerConfig;
use crate::math::pearson;
use crate::model::{summarize_effect, Design, EffectStructure, EffectSummary, ModelError, ModelSpec, Naming, PanelModel};
use crate::panel::{MobilityVar, PanelDataset};

use super::Adjacency;

/// Mobility model with BYM2 canton effects on a given neighbourhood graph.
/// The graph is restricted to the panel's cantons by label.
pub fn spatial_model(panel: &PanelDataset, adjacency: &Adjacency, k: MobilityVar) -> Result<PanelModel, ModelError> {
    let spec = ModelSpec::spatial(k);
    spec.validate()?;
    let codes: Vec<&str> = panel.cantons().iter().map(|c| c.code()).collect();
    let adj = adjacency.subset(&codes).map_err(|e| ModelError::Spatial(e.to_string()))?;
    let d = Design::mobility(panel, k, spec.time_spec, Naming::Plain)?;
    PanelModel::from_designs(spec, vec![d], EffectStructure::Bym2(adj))
}

pub fn fit_spatial_mobility(
    panel: &PanelDataset,
    adjacency: &Adjacency,
    k: MobilityVar,
    config: &SamplerConfig,
    options: FitOptions,
) -> Result<Fit, FitError> {
    fit_compiled(spatial_model(panel, adjacency, k)?, config, options)
}

/// Posterior of the correlation between two equations' canton effects.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSummary {
    pub a: MobilityVar,
    pub b: MobilityVar,
    /// Entry of the correlation matrix of the effect distribution.
    pub model: EffectSummary,
    /// Pearson coefficient of the two sampled effect vectors, per draw.
    pub pearson: EffectSummary,
}

#[derive(Clone, Debug)]
pub struct JointFit {
    pub fit: Fit,
    pub correlations: Vec<CorrelationSummary>,
}

pub fn fit_joint_mobility(
    panel: &PanelDataset,
    variables: &[MobilityVar],
    config: &SamplerConfig,
    options: FitOptions,
) -> Result<JointFit, FitError> {
    let spec = ModelSpec::joint(variables);
    let model = PanelModel::new(&spec, panel)?;
    let fit = fit_compiled(model, config, options)?;
    let draws = &fit.draws;
    let codes: Vec<&str> = panel.cantons().iter().map(|c| c.code()).collect();
    let effect_idx = |v: MobilityVar| -> Vec<usize> {
        codes
            .iter()
            .map(|c| draws.index_of(&format!("theta[{},{c}]", v.name())).expect("joint effect names"))
            .collect()
    };
    let mut correlations = Vec::new();
    for (i, &a) in variables.iter().enumerate() {
        for &b in &variables[i + 1..] {
            let name = format!("corr[{},{}]", a.name(), b.name());
            let model_draws = draws.pooled(&name).expect("joint correlation names");
            let (ia, ib) = (effect_idx(a), effect_idx(b));
            let mut emp = Vec::with_capacity(model_draws.len());
            for c in 0..draws.chains() {
                for t in 0..draws.iterations() {
                    let row = draws.row(c, t);
                    let xa: Vec<f64> = ia.iter().map(|&j| row[j]).collect();
                    let xb: Vec<f64> = ib.iter().map(|&j| row[j]).collect();
                    emp.push(pearson(&xa, &xb));
                }
            }
            correlations.push(CorrelationSummary {
                a,
                b,
                model: summarize_effect(&model_draws),
                pearson: summarize_effect(&emp),
            });
        }
    }
    Ok(JointFit { fit, correlations })
}
