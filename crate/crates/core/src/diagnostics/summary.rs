//! Per-parameter summaries, sampler telemetry aggregates, parameter-pair
//! correlations and the pass/warn verdict block.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::convergence::{ess, rhat};
use super::pareto::ParetoKReport;
use crate::inference::Draws;
use crate::math::{mean, pearson, quantile_sorted, sd};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub cri80: (f64, f64),
    pub cri95: (f64, f64),
    /// NaN for parameters that never move.
    pub rhat: f64,
    pub ess_ratio: f64,
    pub mcse: f64,
}

/// One row per parameter, in draw order.
pub fn summarize(draws: &Draws) -> Vec<SummaryRow> {
    let n_total = (draws.chains() * draws.iterations()) as f64;
    (0..draws.n_params())
        .map(|p| {
            let chains = draws.series(p);
            let mut all: Vec<f64> = chains.iter().flatten().copied().collect();
            let m = mean(&all);
            let s = sd(&all);
            all.sort_by(f64::total_cmp);
            let q = |p| quantile_sorted(&all, p);
            let r = rhat(&chains).unwrap_or(f64::NAN);
            let e = ess(&chains).unwrap_or(f64::NAN);
            SummaryRow {
                name: draws.names()[p].clone(),
                mean: m,
                sd: s,
                cri80: (q(0.10), q(0.90)),
                cri95: (q(0.025), q(0.975)),
                rhat: r,
                ess_ratio: e / n_total,
                mcse: s / e.sqrt(),
            }
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySummary {
    pub chain: usize,
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub max_depth_hits: usize,
    pub mean_accept: f64,
    pub step_size: f64,
    pub mean_leapfrog: f64,
}

/// Sampling-phase telemetry per chain.
pub fn telemetry_summary(draws: &Draws, max_tree_depth: u32) -> Vec<TelemetrySummary> {
    (0..draws.chains())
        .map(|c| {
            let t = draws.chain_telemetry(c);
            let n = t.len().max(1) as f64;
            TelemetrySummary {
                chain: c,
                divergences: t.iter().filter(|x| x.divergent).count(),
                warmup_divergences: draws.warmup_divergences().get(c).copied().unwrap_or(0),
                max_depth_hits: t.iter().filter(|x| x.tree_depth >= max_tree_depth).count(),
                mean_accept: t.iter().map(|x| x.accept_stat).sum::<f64>() / n,
                step_size: t.first().map_or(f64::NAN, |x| x.step_size),
                mean_leapfrog: t.iter().map(|x| x.n_leapfrog as f64).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Pearson correlations of pooled draws with the scatter data behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct PairCorrelations {
    pub names: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    /// Pooled draws per parameter, for pairwise scatter plots.
    pub values: Vec<Vec<f64>>,
}

impl PairCorrelations {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.matrix[a][b]
    }

    /// Off-diagonal `(i, j, r)` triples with `i < j`.
    pub fn pairs(&self) -> Vec<(usize, usize, f64)> {
        let k = self.names.len();
        (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).map(|(i, j)| (i, j, self.matrix[i][j])).collect()
    }
}

/// Correlation matrix of the named parameters; unknown names are skipped.
pub fn pair_correlations(draws: &Draws, names: &[String]) -> PairCorrelations {
    let (names, values): (Vec<String>, Vec<Vec<f64>>) =
        names.iter().filter_map(|n| draws.pooled(n).map(|v| (n.clone(), v))).unzip();
    let k = names.len();
    let mut matrix = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let r = pearson(&values[i], &values[j]);
            matrix[i][j] = r;
            matrix[j][i] = r;
        }
    }
    PairCorrelations { names, matrix, values }
}

/// Correlations among the policy coefficients of the first equation.
pub fn policy_pair_correlations(draws: &Draws) -> PairCorrelations {
    let names: Vec<String> = draws
        .names()
        .iter()
        .filter(|n| n.starts_with("beta"))
        .take(crate::panel::Measure::ALL.len())
        .cloned()
        .collect();
    pair_correlations(draws, &names)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status == CheckStatus::Pass)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let s = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Warn => "WARN",
            };
            writeln!(f, "[{s}] {}: {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

fn check(name: &str, ok: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        status: if ok { CheckStatus::Pass } else { CheckStatus::Warn },
        detail,
    }
}

/// Pass/warn verdicts for convergence, sampling efficiency, divergences,
/// tree depth, dispersion and, when given, influential observations.
pub fn verdict(
    rows: &[SummaryRow],
    telemetry: &[TelemetrySummary],
    pareto: Option<&ParetoKReport>,
) -> Verdict {
    let mut checks = Vec::new();
    let worst_rhat = rows.iter().map(|r| r.rhat).filter(|r| r.is_finite()).fold(1.0, f64::max);
    checks.push(check("rhat", worst_rhat < 1.01, format!("max R-hat {worst_rhat:.3}")));
    let low_ess = rows.iter().map(|r| r.ess_ratio).filter(|r| r.is_finite()).fold(f64::INFINITY, f64::min);
    checks.push(check("ess", low_ess > 0.1, format!("min n_eff/N {low_ess:.3}")));
    let div: usize = telemetry.iter().map(|t| t.divergences).sum();
    checks.push(check("divergences", div == 0, format!("{div} divergent transitions after warm-up")));
    let depth: usize = telemetry.iter().map(|t| t.max_depth_hits).sum();
    checks.push(check("tree_depth", depth == 0, format!("{depth} transitions hit the maximum tree depth")));
    for r in rows.iter().filter(|r| r.name.starts_with("zeta")) {
        checks.push(check(
            "overdispersion",
            r.mean.is_finite(),
            format!("{} {:.2} (95% CrI: {:.2}–{:.2})", r.name, r.mean, r.cri95.0, r.cri95.1),
        ));
    }
    if let Some(p) = pareto {
        checks.push(check(
            "pareto_k",
            p.bands[2] == 0,
            format!("{} good, {} ok, {} bad of {}", p.bands[0], p.bands[1], p.bands[2], p.khat.len()),
        ));
    }
    Verdict { checks }
}
