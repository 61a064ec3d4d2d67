//! Posterior checks: convergence, effective sample size, posterior
//! predictive replicates, importance-ratio tail shapes, parameter-pair
//! correlations and the plain-text verdict that summarizes them.

pub mod convergence;
pub mod pareto;
pub mod ppc;
pub mod summary;

use thiserror::Error;

pub use convergence::{ess, ess_bulk, mcse_mean, rhat};
pub use pareto::{khat_band, pareto_khat, ParetoKReport};
pub use ppc::{loo_pareto_k, overdispersion_moment, posterior_predictive, PpcEquation};
pub use summary::{
    pair_correlations, policy_pair_correlations, summarize, telemetry_summary, verdict, Check, CheckStatus,
    PairCorrelations, SummaryRow, TelemetrySummary, Verdict,
};

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least 2 chains with 4 draws each")]
    TooFewDraws,
    #[error("all chains are constant")]
    ConstantChains,
    #[error("need at least {needed} values, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("draws do not match the model: {0}")]
    SpecMismatch(String),
}
