mod common;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swissmob::model::{linear_predictor, nb_log_pmf, ModelKind, ModelSpec, PanelModel, TimeSpec};
use swissmob::synth::{generate, CasesTruth, SynthConfig};
use swissmob::{CantonId, LogDensity, MobilityVar};

fn panel_with_cases(lag: u32) -> swissmob::PanelDataset {
    let cfg = SynthConfig { cases: Some(CasesTruth { lag, ..Default::default() }), ..SynthConfig::default() };
    generate(&cfg, 17).unwrap().panel
}

#[test]
fn gradients_match_finite_differences_for_every_variant() {
    let p7 = panel_with_cases(7);
    let specs = vec![
        ModelSpec::mobility(MobilityVar::Total),
        ModelSpec::mobility(MobilityVar::Train).with_time_spec(TimeSpec::LinearQuadratic),
        ModelSpec::mobility(MobilityVar::Road).with_time_spec(TimeSpec::LogTrendPlusWeekFE),
        ModelSpec { centered: true, ..ModelSpec::mobility(MobilityVar::Total) },
        ModelSpec::cases(MobilityVar::Total, 7),
        ModelSpec::cases(MobilityVar::Total, 13),
        {
            let mut s = ModelSpec::cases(MobilityVar::Total, 7);
            s.extensions.tests_control = true;
            s
        },
        ModelSpec::mediation(MobilityVar::Total, 7),
        ModelSpec { kind: ModelKind::MediationMediator, ..ModelSpec::mediation(MobilityVar::Total, 9) },
        {
            let mut s = ModelSpec { kind: ModelKind::MediationOutcome, ..ModelSpec::mediation(MobilityVar::Total, 9) };
            s.extensions.interaction = true;
            s
        },
        ModelSpec::spatial(MobilityVar::Total),
        ModelSpec::joint(&[MobilityVar::Total, MobilityVar::Train]),
        ModelSpec::joint(&[MobilityVar::Commuter, MobilityVar::NonCommuter, MobilityVar::Highway]),
    ];
    for (i, spec) in specs.iter().enumerate() {
        let model = PanelModel::new(spec, &p7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let err = common::max_gradient_error(&model, 10, &mut rng);
        assert!(err < 1e-5, "{spec}: {err:e}");
    }
}

#[test]
fn named_parameters_follow_block_convention() {
    let p = panel_with_cases(7);
    let m = PanelModel::new(&ModelSpec::mobility(MobilityVar::Total), &p).unwrap();
    let names = m.param_names();
    for n in ["alpha", "beta[1]", "beta[5]", "gamma", "gamma_B", "delta[Sun]", "zeta", "sigma_theta", "theta[AG]", "theta[ZH]"] {
        assert!(names.iter().any(|x| x == n), "{n} missing");
    }
    let med = PanelModel::new(&ModelSpec::mediation(MobilityVar::Total, 7), &p).unwrap().param_names();
    for n in ["beta_m[2]", "lambda_y[2]", "psi_y", "psi_B_y", "theta_m[GE]", "theta_y[GE]", "rho"] {
        assert!(med.iter().any(|x| x == n), "{n} missing");
    }
    let sp = PanelModel::new(&ModelSpec::spatial(MobilityVar::Total), &p).unwrap().param_names();
    for n in ["varphi", "tau", "phi_star[BE]", "upsilon[BE]"] {
        assert!(sp.iter().any(|x| x == n), "{n} missing");
    }
}

#[test]
fn linear_predictor_identity_and_policy_effect() {
    let p = panel_with_cases(7);
    let spec = ModelSpec::mobility(MobilityVar::Total);
    let m = PanelModel::new(&spec, &p).unwrap();
    let mut params: BTreeMap<String, f64> = m.param_names().into_iter().map(|n| (n, 0.0)).collect();
    let zh = CantonId::parse("ZH").unwrap();
    // a Monday before any measure, before the first case in ZH
    let monday = swissmob::reference::date("2020-02-24");
    assert_eq!(linear_predictor(&spec, &params, &p, zh, monday).unwrap(), 0.0);

    let ti = CantonId::parse("TI").unwrap();
    let d = swissmob::reference::date("2020-03-16"); // Monday; venue closure active in TI
    let row = p.row(ti, d).unwrap();
    assert!(row.policy[2]);
    params.insert("beta[3]".into(), -0.2863);
    let eta = linear_predictor(&spec, &params, &p, ti, d).unwrap();
    let active: f64 = row.policy.iter().enumerate().filter(|(_, a)| **a).count() as f64;
    // other active measures have zero coefficients; log z has gamma = 0
    assert!(active >= 1.0);
    assert!((eta.exp() - 0.751).abs() < 1e-3);
}

#[test]
fn hand_assembled_eta_matches_dot_product() {
    let p = panel_with_cases(7);
    let spec = ModelSpec::cases(MobilityVar::Total, 7);
    let m = PanelModel::new(&spec, &p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params: BTreeMap<String, f64> = m.param_names().into_iter().map(|n| (n, rng.random_range(-1.0..1.0))).collect();
    let d = &m.equations()[0];
    let r = 57;
    let (c, date) = d.rows[r];
    let row = p.row(c, date).unwrap();
    let lag = p.lagged_log_count(c, date, MobilityVar::Total, 7).unwrap();
    let wd = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"][row.weekday_index()];
    let mut expect = params["alpha"] + params[&format!("theta[{c}]")];
    if wd != "Mon" {
        expect += params[&format!("delta[{wd}]")];
    }
    expect += params["xi"] * lag;
    expect += params["xi_B"] * p.mundlak_m(c, MobilityVar::Total, 7).unwrap();
    expect += params["gamma"] * row.log_z();
    expect += params["gamma_B"] * p.mundlak_z_cases()[&c];
    let got = linear_predictor(&spec, &params, &p, c, date).unwrap();
    assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
}

#[test]
fn prior_oracle_and_offset_shift() {
    // a single canton-day with all covariates zeroed reduces the posterior
    // to closed-form prior terms plus one NB term
    let cfg = SynthConfig::small(1, 1);
    let sp = generate(&cfg, 2).unwrap();
    let spec = ModelSpec::mobility(MobilityVar::Total);
    let m = PanelModel::new(&spec, &sp.panel).unwrap();
    let d = &m.equations()[0];
    assert_eq!(d.n(), 1);
    let x = vec![0.3; m.dim()];
    let (lp, _) = m.log_posterior(&x).unwrap();
    let c = m.constrain(&x);
    let names = m.param_names();
    let get = |n: &str| c[names.iter().position(|x| x == n).unwrap()];

    let ln_norm = |v: f64, mu: f64, sd: f64| -0.5 * ((v - mu) / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let ln_t = |v: f64, nu: f64, mu: f64, s: f64| {
        use statrs::function::gamma::ln_gamma;
        ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln() - s.ln()
            - (nu + 1.0) / 2.0 * (1.0 + ((v - mu) / s).powi(2) / nu).ln()
    };
    let mut expect = 0.0;
    expect += ln_t(get("alpha"), 3.0, 1.8, 2.5);
    for l in 1..=5 {
        expect += ln_norm(get(&format!("beta[{l}]")), -0.25, 0.25);
    }
    expect += ln_norm(get("gamma"), 1.0, 1.0) + ln_norm(get("gamma_B"), 0.0, 5.0);
    for w in ["Tue", "Wed", "Thu", "Fri", "Sat", "Sun"] {
        expect += ln_norm(get(&format!("delta[{w}]")), 0.0, 0.5);
    }
    let zeta = get("zeta");
    expect += 0.01 * 0.01f64.ln() - statrs::function::gamma::ln_gamma(0.01) + (0.01 - 1.0) * zeta.ln() - 0.01 * zeta + zeta.ln();
    let sigma = get("sigma_theta");
    expect += ln_t(sigma, 3.0, 0.0, 2.5) + std::f64::consts::LN_2 + sigma.ln();
    expect += ln_norm(0.3, 0.0, 1.0);
    let mu = (d.offset[0] + linear_predictor(&spec, &names.iter().cloned().zip(c.iter().copied()).collect(), &sp.panel, d.rows[0].0, d.rows[0].1).unwrap()).exp();
    expect += nb_log_pmf(d.y[0], mu, zeta).unwrap();
    assert!((lp - expect).abs() < 1e-10 * expect.abs().max(1.0), "{lp} vs {expect}");
}

#[test]
fn doubling_exposure_shifts_the_optimal_intercept_by_log_two() {
    use swissmob::model::{Design, EffectStructure, Naming};
    let mut sp = SynthConfig::small(2, 4);
    sp.schedule = swissmob::PolicySchedule::new();
    let panel = generate(&sp, 8).unwrap().panel;
    let base = Design::mobility(&panel, MobilityVar::Total, TimeSpec::LogTrend, Naming::Plain).unwrap();
    // keep only the intercept: drop every covariate column
    let strip = |mut d: Design, shift: f64| {
        d.x.clear();
        d.covariates.clear();
        d.xbar.clear();
        for o in &mut d.offset {
            *o += shift;
        }
        d
    };
    let argmax = |d: Design| {
        let spec = ModelSpec::mobility(MobilityVar::Total);
        let m = PanelModel::from_designs(spec, vec![d], EffectStructure::Independent { centered: false }).unwrap();
        // profile the intercept with everything else fixed at 0
        let mut x = vec![0.0; m.dim()];
        let mut g = vec![0.0; m.dim()];
        for _ in 0..200 {
            m.log_density_grad(&x, &mut g);
            // Newton step on alpha with a numerical second derivative
            let h = 1e-4;
            let mut xp = x.clone();
            xp[0] += h;
            let mut gp = vec![0.0; m.dim()];
            m.log_density_grad(&xp, &mut gp);
            let hess = (gp[0] - g[0]) / h;
            x[0] -= g[0] / hess;
            if g[0].abs() < 1e-10 {
                break;
            }
        }
        x[0]
    };
    let a1 = argmax(strip(base.clone(), 0.0));
    let a2 = argmax(strip(base, std::f64::consts::LN_2));
    // the alpha prior pulls both optima slightly; the data dominate
    assert!((a2 - a1 + std::f64::consts::LN_2).abs() < 1e-3, "{a1} {a2}");
}

#[test]
fn centered_and_non_centered_agree_after_mapping() {
    let p = panel_with_cases(7);
    let nc = PanelModel::new(&ModelSpec::mobility(MobilityVar::Total), &p).unwrap();
    let ce = PanelModel::new(&ModelSpec { centered: true, ..ModelSpec::mobility(MobilityVar::Total) }, &p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..nc.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ls = nc.unconstrained_names().iter().position(|n| n == "log_sigma_theta").unwrap();
    let sigma = x[ls].exp();
    let mut y = x.clone();
    for v in &mut y[ls + 1..] {
        *v *= sigma;
    }
    let a = nc.constrain(&x);
    let b = ce.constrain(&y);
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-12);
    }
    // densities differ by the Jacobian of θ = σ θ_raw
    let (la, _) = nc.log_posterior(&x).unwrap();
    let (lb, _) = ce.log_posterior(&y).unwrap();
    let n = p.cantons().len() as f64;
    assert!((la - (lb + n * sigma.ln())).abs() < 1e-8 * la.abs());
}
