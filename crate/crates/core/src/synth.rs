//! Synthetic panels drawn from the models' own generative process, used
//! for recovery studies and tests.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::extensions::icar::{icar_scaling_factor, sample_icar, Adjacency};
use crate::model::nb_sample;
use crate::panel::{
    days_since_first_case, weekday_index, CantonId, CaseRecord, LoadOptions, Measure, MobilityVar, PanelDataset,
    PanelError, PanelTables, PolicyRecord, PolicySchedule, PopulationRecord, TestRecord, TripCountRecord,
};
use crate::reference::{date, mobility_window, FIRST_CASE, POPULATION};

/// How canton effects are drawn.
#[derive(Clone, Debug, PartialEq)]
pub enum EffectGen {
    Iid { sigma: f64 },
    /// BYM2 combined effect with mixing `varphi` and precision `tau`.
    Bym2 { varphi: f64, tau: f64 },
    Fixed(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MobilityTruth {
    pub alpha: f64,
    pub beta: [f64; 5],
    pub gamma: f64,
    pub gamma_b: f64,
    /// Tuesday..Sunday relative to Monday.
    pub delta: [f64; 6],
    pub zeta: f64,
}

impl Default for MobilityTruth {
    fn default() -> Self {
        Self {
            alpha: -2.5,
            beta: [0.93f64.ln(), 0.751f64.ln(), 0.784f64.ln(), 0.777f64.ln(), 0.99f64.ln()],
            gamma: -0.05,
            gamma_b: 0.0,
            delta: [0.02, 0.03, 0.03, 0.08, -0.2, -0.35],
            zeta: 60.0,
        }
    }
}

/// Case-growth process; `lambda` and `interaction` give the direct policy
/// paths of the mediation outcome model.
#[derive(Clone, Debug, PartialEq)]
pub struct CasesTruth {
    pub variable: MobilityVar,
    pub lag: u32,
    pub alpha: f64,
    pub xi: f64,
    pub xi_b: f64,
    pub gamma: f64,
    pub gamma_b: f64,
    pub lambda: [f64; 5],
    pub interaction: [f64; 5],
    pub tests: f64,
    pub delta: [f64; 6],
    pub zeta: f64,
    pub sigma_theta: f64,
    /// Correlation with the canton effects of `variable`'s mobility series.
    pub rho: f64,
}

impl Default for CasesTruth {
    fn default() -> Self {
        Self {
            variable: MobilityVar::Total,
            lag: 7,
            alpha: -10.5,
            xi: 1.0,
            xi_b: -1.0,
            gamma: 1.0,
            gamma_b: 0.0,
            lambda: [0.0; 5],
            interaction: [0.0; 5],
            tests: 0.0,
            delta: [0.05, 0.05, 0.0, 0.0, -0.1, -0.15],
            zeta: 15.0,
            sigma_theta: 0.3,
            rho: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub cantons: Vec<CantonId>,
    /// Populations are multiplied by this factor.
    pub population_scale: f64,
    pub schedule: PolicySchedule,
    pub first_case: BTreeMap<CantonId, NaiveDate>,
    pub mobility: MobilityTruth,
    pub mobility_effects: EffectGen,
    /// Log-scale level of each variable relative to total trips.
    pub variable_levels: [f64; 6],
    /// Every variable shares one set of canton effects.
    pub shared_effects: bool,
    pub cases: Option<CasesTruth>,
    /// Sd of a latent shock shared by the lagged mobility and the case
    /// count it feeds.
    pub shock_sd: f64,
    pub load: LoadOptions,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let (_, end) = mobility_window();
        Self {
            start: date("2020-02-10"),
            end,
            cantons: CantonId::all().collect(),
            population_scale: 1.0,
            schedule: PolicySchedule::bundled(),
            first_case: FIRST_CASE
                .iter()
                .map(|(c, d)| (CantonId::parse(c).expect("bundled code"), date(d)))
                .collect(),
            mobility: MobilityTruth::default(),
            mobility_effects: EffectGen::Iid { sigma: 0.3 },
            variable_levels: [0.0, -2.0, -0.5, -1.4, -1.0, -0.45],
            shared_effects: false,
            cases: None,
            shock_sd: 0.0,
            load: LoadOptions::default(),
        }
    }
}

impl SynthConfig {
    /// A `n_cantons × n_days` mobility-only panel starting on the first day
    /// of the default window.
    pub fn small(n_cantons: usize, n_days: usize) -> Self {
        let (ws, _) = mobility_window();
        let end = ws + Duration::days(n_days as i64 - 1);
        let mut load = LoadOptions::default();
        load.mobility_window = (ws, end);
        load.cases_window_end = end;
        Self {
            start: ws,
            end,
            cantons: CantonId::all().take(n_cantons).collect(),
            load,
            ..Self::default()
        }
    }
}

/// A generated panel with the effects that produced it.
#[derive(Clone, Debug)]
pub struct SynthPanel {
    pub tables: PanelTables,
    pub panel: PanelDataset,
    /// Canton effects per mobility variable.
    pub mobility_theta: Vec<Vec<f64>>,
    pub cases_theta: Vec<f64>,
}

fn draw_effects(gen: &EffectGen, cantons: &[CantonId], rng: &mut ChaCha8Rng) -> Result<Vec<f64>, PanelError> {
    let n = cantons.len();
    Ok(match gen {
        EffectGen::Iid { sigma } => (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect(),
        EffectGen::Bym2 { varphi, tau } => {
            let codes: Vec<&str> = cantons.iter().map(|c| c.code()).collect();
            let adj = Adjacency::swiss()
                .subset(&codes)
                .map_err(|_| PanelError::Empty("connected canton subset"))?;
            let kappa = icar_scaling_factor(&adj).map_err(|_| PanelError::Empty("connected canton subset"))?;
            let phi = sample_icar(&adj, rng).map_err(|_| PanelError::Empty("connected canton subset"))?;
            let s = tau.powf(-0.5);
            phi.iter()
                .map(|p| {
                    let th: f64 = rng.sample(StandardNormal);
                    s * ((1.0 - varphi).sqrt() * th + varphi.sqrt() * p / kappa.sqrt())
                })
                .collect()
        }
        EffectGen::Fixed(v) => {
            assert_eq!(v.len(), n, "fixed effects length");
            v.clone()
        }
    })
}

fn weekday_effect(delta: &[f64; 6], d: NaiveDate) -> f64 {
    match weekday_index(d.weekday()) {
        0 => 0.0,
        w => delta[w - 1],
    }
}

/// Simulates trip counts, cumulative cases, national tests, policies and
/// populations, then builds the panel with the configured load options.
pub fn generate(cfg: &SynthConfig, seed: u64) -> Result<SynthPanel, PanelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cantons = &cfg.cantons;
    let n_days = (cfg.end - cfg.start).num_days() + 1;
    let dates: Vec<NaiveDate> = (0..n_days).map(|i| cfg.start + Duration::days(i)).collect();
    let pops: Vec<f64> = cantons
        .iter()
        .map(|c| POPULATION[c.index()].1 as f64 * cfg.population_scale)
        .collect();
    let first = |c: CantonId| cfg.first_case.get(&c).copied();

    let mut mobility_theta = Vec::new();
    let shared = draw_effects(&cfg.mobility_effects, cantons, &mut rng)?;
    for k in MobilityVar::ALL {
        if cfg.shared_effects || k == MobilityVar::Total {
            mobility_theta.push(shared.clone());
        } else {
            mobility_theta.push(draw_effects(&cfg.mobility_effects, cantons, &mut rng)?);
        }
    }

    let lag = cfg.cases.as_ref().map_or(0, |c| c.lag as i64);
    let mut shocks: BTreeMap<(usize, NaiveDate), f64> = BTreeMap::new();
    if cfg.shock_sd > 0.0 {
        for i in 0..cantons.len() {
            for &d in &dates {
                shocks.insert((i, d), cfg.shock_sd * rng.sample::<f64, _>(StandardNormal));
            }
        }
    }

    // mobility
    let m = &cfg.mobility;
    let mut trips = Vec::new();
    let mut counts: BTreeMap<(usize, NaiveDate, usize), u64> = BTreeMap::new();
    let shock_var = cfg.cases.as_ref().map(|c| c.variable);
    for (i, &c) in cantons.iter().enumerate() {
        let mean_log_z = {
            let (ws, we) = cfg.load.mobility_window;
            let zs: Vec<f64> = dates
                .iter()
                .filter(|d| **d >= ws && **d <= we)
                .map(|&d| (days_since_first_case(first(c), d).1 as f64).ln())
                .collect();
            if zs.is_empty() { 0.0 } else { crate::math::mean(&zs) }
        };
        for &d in &dates {
            let dummies = cfg.schedule.dummies(c, d);
            let (_, z) = days_since_first_case(first(c), d);
            let base = m.alpha
                + weekday_effect(&m.delta, d)
                + m.gamma * (z as f64).ln()
                + m.gamma_b * mean_log_z
                + dummies.iter().zip(&m.beta).map(|(on, b)| if *on { *b } else { 0.0 }).sum::<f64>();
            for k in MobilityVar::ALL {
                let mut eta = base + cfg.variable_levels[k.index()] + mobility_theta[k.index()][i];
                if Some(k) == shock_var {
                    eta += shocks.get(&(i, d + Duration::days(lag))).copied().unwrap_or(0.0);
                }
                let y = nb_sample(&mut rng, pops[i] * eta.exp(), m.zeta);
                counts.insert((i, d, k.index()), y);
                trips.push(TripCountRecord {
                    canton: c.code().into(),
                    date: d,
                    variable: k.name().into(),
                    count: y as i64,
                });
            }
        }
    }

    // national tests grow steadily over the period
    let tests: Vec<TestRecord> = dates
        .iter()
        .enumerate()
        .map(|(t, &d)| TestRecord { date: d, national_tests: (200.0 * (0.08 * t as f64).exp()).round() })
        .collect();
    let total_pop: f64 = pops.iter().sum();

    // cases
    let mut cases_theta = vec![0.0; cantons.len()];
    let mut cases = Vec::new();
    let end = cfg.load.cases_window_end.min(cfg.end);
    if let Some(ct) = &cfg.cases {
        let base = &mobility_theta[ct.variable.index()];
        let sd_m = crate::math::sd(base).max(1e-12);
        for (i, th) in cases_theta.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *th = ct.sigma_theta * (ct.rho * base[i] / sd_m + (1.0 - ct.rho * ct.rho).sqrt() * z);
        }
    }
    let mut all_lm = Vec::new();
    for (i, &c) in cantons.iter().enumerate() {
        let Some(fc) = first(c) else { continue };
        if let Some(ct) = &cfg.cases {
            let s = ct.lag as i64;
            let window: Vec<NaiveDate> = dates.iter().copied().filter(|d| *d >= fc && *d <= end).collect();
            for &d in &window {
                if let Some(&y) = counts.get(&(i, d - Duration::days(s), ct.variable.index())) {
                    all_lm.push((y.max(1) as f64).ln());
                }
            }
        }
    }
    let lm_centre = if all_lm.is_empty() { 0.0 } else { crate::math::mean(&all_lm) };
    for (i, &c) in cantons.iter().enumerate() {
        let Some(fc) = first(c) else { continue };
        match &cfg.cases {
            None => {
                cases.push(CaseRecord { canton: c.code().into(), date: fc, cumulative_cases: 1 });
            }
            Some(ct) => {
                let s = ct.lag as i64;
                let mut cum = 0u64;
                let window: Vec<NaiveDate> = dates.iter().copied().filter(|d| *d >= fc && *d <= end).collect();
                let lagged = |d: NaiveDate| -> Result<f64, PanelError> {
                    let y = counts
                        .get(&(i, d - Duration::days(s), ct.variable.index()))
                        .copied()
                        .ok_or(PanelError::InsufficientHistory { canton: c, date: d, lag: ct.lag })?;
                    Ok((y.max(1) as f64).ln())
                };
                let lms = window.iter().map(|&d| lagged(d)).collect::<Result<Vec<_>, _>>()?;
                let mean_lm = if lms.is_empty() { 0.0 } else { crate::math::mean(&lms) };
                let mean_lz = crate::math::mean(
                    &window.iter().map(|&d| (days_since_first_case(Some(fc), d).1 as f64).ln()).collect::<Vec<_>>(),
                );
                for (&d, &lm) in window.iter().zip(&lms) {
                    let (_, z) = days_since_first_case(Some(fc), d);
                    let dummies = cfg.schedule.dummies(c, d - Duration::days(s));
                    let mut eta = ct.alpha
                        + cases_theta[i]
                        + weekday_effect(&ct.delta, d)
                        + ct.xi * lm
                        + ct.xi_b * mean_lm
                        + ct.gamma * (z as f64).ln()
                        + ct.gamma_b * mean_lz
                        + shocks.get(&(i, d)).copied().unwrap_or(0.0);
                    for l in 0..5 {
                        if dummies[l] {
                            eta += ct.lambda[l] + ct.interaction[l] * (lm - lm_centre);
                        }
                    }
                    if ct.tests != 0.0 {
                        let t = (d - cfg.start).num_days() as usize;
                        eta += ct.tests * (tests[t].national_tests * pops[i] / total_pop).ln();
                    }
                    let mut y = nb_sample(&mut rng, pops[i] * eta.exp(), ct.zeta);
                    if d == fc {
                        y = y.max(1);
                    }
                    cum += y;
                    cases.push(CaseRecord { canton: c.code().into(), date: d, cumulative_cases: cum as i64 });
                }
            }
        }
    }

    let policies = cfg
        .schedule
        .entries()
        .filter(|(c, _, _)| cantons.contains(c))
        .map(|(c, m, d)| PolicyRecord { canton: c.code().into(), measure: m.name().into(), start_date: d })
        .collect();
    let population = cantons
        .iter()
        .zip(&pops)
        .map(|(c, p)| PopulationRecord { canton: c.code().into(), population: *p })
        .collect();
    let tables = PanelTables { trips, cases, policies, population, tests: Some(tests) };
    let panel = tables.build(&cfg.load)?;
    Ok(SynthPanel { tables, panel, mobility_theta, cases_theta })
}

/// Every measure starting on a fixed day in all cantons of `cfg`.
pub fn uniform_schedule(cantons: &[CantonId], starts: [NaiveDate; 5]) -> PolicySchedule {
    let mut s = PolicySchedule::new();
    for &c in cantons {
        for m in Measure::ALL {
            s.insert(c, m, starts[m.index()]).expect("fresh schedule");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_panel_has_full_shape() {
        let sp = generate(&SynthConfig::default(), 1).unwrap();
        assert_eq!(sp.panel.cantons().len(), 26);
        assert_eq!(sp.panel.mobility_rows().count(), 26 * 42);
    }

    #[test]
    fn same_seed_same_tables() {
        let cfg = SynthConfig { cases: Some(CasesTruth::default()), ..SynthConfig::default() };
        assert_eq!(generate(&cfg, 5).unwrap().tables, generate(&cfg, 5).unwrap().tables);
    }

    #[test]
    fn small_instance() {
        let sp = generate(&SynthConfig::small(2, 4), 3).unwrap();
        assert_eq!(sp.panel.mobility_rows().count(), 8);
    }
}
