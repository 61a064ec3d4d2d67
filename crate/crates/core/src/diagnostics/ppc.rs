//! Posterior predictive replicates and per-observation influence.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;

use super::pareto::{pareto_khat, ParetoKReport};
use super::DiagnosticsError;
use crate::inference::{Draws, LogDensity};
use crate::model::{nb_log_pmf, nb_sample, PanelModel};

/// Observed counts of one regression equation next to its replicates.
#[derive(Clone, Debug, PartialEq)]
pub struct PpcEquation {
    pub outcome: String,
    pub observed: Vec<u64>,
    /// `(chain, iteration)` of the posterior draw behind each replicate.
    pub draws: Vec<(usize, usize)>,
    pub replicates: Vec<Vec<u64>>,
}

impl PpcEquation {
    /// Mean count per replicate.
    pub fn replicate_means(&self) -> Vec<f64> {
        self.replicates.iter().map(|r| r.iter().sum::<u64>() as f64 / r.len() as f64).collect()
    }
}

fn check_names(draws: &Draws, model: &PanelModel) -> Result<(), DiagnosticsError> {
    let names = model.param_names();
    if draws.names() != names.as_slice() {
        return Err(DiagnosticsError::SpecMismatch(format!(
            "draws carry {} parameters, model {} expects {}",
            draws.n_params(),
            model.spec(),
            names.len()
        )));
    }
    Ok(())
}

/// Simulates every panel row from `n_rep` randomly chosen posterior draws.
pub fn posterior_predictive<R: Rng + ?Sized>(
    draws: &Draws,
    model: &PanelModel,
    n_rep: usize,
    rng: &mut R,
) -> Result<Vec<PpcEquation>, DiagnosticsError> {
    check_names(draws, model)?;
    let total = draws.chains() * draws.iterations();
    if n_rep > total {
        return Err(DiagnosticsError::TooFewSamples { needed: n_rep, got: total });
    }
    let picks: Vec<(usize, usize)> = sample_indices(rng, total, n_rep)
        .into_iter()
        .map(|i| (i / draws.iterations(), i % draws.iterations()))
        .collect();
    let mut out: Vec<PpcEquation> = model
        .equations()
        .iter()
        .map(|d| PpcEquation {
            outcome: d.naming.name("y", None),
            observed: d.y.clone(),
            draws: picks.clone(),
            replicates: Vec::with_capacity(n_rep),
        })
        .collect();
    for &(c, i) in &picks {
        for (eq, (mu, zeta)) in out.iter_mut().zip(model.means(draws.row(c, i))) {
            eq.replicates.push(mu.iter().map(|&m| nb_sample(rng, m, zeta)).collect());
        }
    }
    Ok(out)
}

/// Method-of-moments dispersion `Σμ² / Σ((y − μ)² − y)` of counts around
/// known means; infinite when the data show no excess variance.
pub fn overdispersion_moment(y: &[u64], mu: &[f64]) -> f64 {
    let num: f64 = mu.iter().map(|m| m * m).sum();
    let den: f64 = y.iter().zip(mu).map(|(&y, m)| (y as f64 - m).powi(2) - y as f64).sum();
    if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Tail shape of the leave-one-out importance ratios `1 / p(y_i | θ_s)`
/// for every observation of every equation, in equation-then-row order.
pub fn loo_pareto_k(draws: &Draws, model: &PanelModel) -> Result<ParetoKReport, DiagnosticsError> {
    check_names(draws, model)?;
    let s = draws.chains() * draws.iterations();
    let means: Vec<Vec<(Vec<f64>, f64)>> = (0..s)
        .into_par_iter()
        .map(|k| model.means(draws.row(k / draws.iterations(), k % draws.iterations())))
        .collect();
    let mut khat = Vec::new();
    for (e, d) in model.equations().iter().enumerate() {
        let ks: Result<Vec<f64>, DiagnosticsError> = (0..d.n())
            .into_par_iter()
            .map(|r| {
                let lr: Vec<f64> = means
                    .iter()
                    .map(|m| {
                        let (mu, zeta) = (&m[e].0, m[e].1);
                        -nb_log_pmf(d.y[r], mu[r], zeta).unwrap_or(f64::NEG_INFINITY)
                    })
                    .collect();
                pareto_khat(&lr)
            })
            .collect();
        khat.extend(ks?);
    }
    Ok(ParetoKReport::new(khat))
}
