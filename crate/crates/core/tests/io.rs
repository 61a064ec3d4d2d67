use swissmob::diagnostics::summarize;
use swissmob::fit::{ForestRow, Scale};
use swissmob::io::*;
use swissmob::model::EffectSummary;
use swissmob::{sample, LogDensity, MobilityVar, ModelSpec, SamplerConfig};

/// Correlated Gaussian with one positive (log-scale) coordinate.
struct Target;

impl LogDensity for Target {
    fn dim(&self) -> usize {
        3
    }
    fn log_density_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
        g[0] = -(x[0] - 0.5 * x[1]);
        g[1] = -x[1] + 0.5 * (x[0] - 0.5 * x[1]);
        g[2] = -x[2];
        -0.5 * ((x[0] - 0.5 * x[1]).powi(2) + x[1] * x[1] + x[2] * x[2])
    }
    fn param_names(&self) -> Vec<String> {
        vec!["beta[1]".into(), "beta[2]".into(), "zeta".into()]
    }
    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0], x[1], x[2].exp()]
    }
}

fn config() -> SamplerConfig {
    SamplerConfig { chains: 2, warmup: 150, samples: 120, seed: 19, ..Default::default() }
}

#[test]
fn draws_round_trip_bit_for_bit() {
    let draws = sample(&Target, &config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut m = RunManifest::new("fit-mobility", 19);
    save_draws(&draws, dir.path(), &mut m).unwrap();
    m.write(&dir.path().join(MANIFEST_FILE)).unwrap();

    let m2 = RunManifest::read(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(m, m2);
    let back = load_draws(dir.path(), &m2).unwrap();
    assert_eq!(back.names(), draws.names());
    for c in 0..draws.chains() {
        for i in 0..draws.iterations() {
            let (a, b) = (draws.row(c, i), back.row(c, i));
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
    assert_eq!(back, draws);

    // writing the reloaded draws gives the same bytes
    let again = tempfile::tempdir().unwrap();
    save_draws(&back, again.path(), &mut m.clone()).unwrap();
    for f in [DRAWS_FILE, TELEMETRY_FILE] {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap());
    }
}

#[test]
fn summary_and_forest_tables_round_trip() {
    let draws = sample(&Target, &config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rows = summarize(&draws);
    let p = dir.path().join(SUMMARY_FILE);
    write_summary(&rows, &p).unwrap();
    assert_eq!(read_summary(&p).unwrap(), rows);

    let s = EffectSummary { mean: -24.9, cri80: (-27.0, -22.1), cri95: (-28.3, -20.6) };
    let forest = vec![ForestRow::new("mobility", "Ban>5", "beta[2]", Scale::Percent, &s)];
    let p = dir.path().join(FOREST_FILE);
    write_forest(&forest, &p).unwrap();
    assert_eq!(read_forest(&p).unwrap(), forest);
}

#[test]
fn manifest_carries_spec_sampler_and_config() {
    let mut m = RunManifest::new("fit-cases", 7);
    m.spec = Some(ModelSpec::mobility(MobilityVar::Train));
    m.sampler = Some(config());
    m.notes.push("intercept prior is an unconstrained Student-t".into());
    m.config.insert("lags".into(), toml::Value::String("7:13".into()));
    let text = m.to_toml().unwrap();
    let back: RunManifest = toml::from_str(&text).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.to_toml().unwrap(), text);
}

#[test]
fn incomplete_draws_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join(DRAWS_FILE);
    std::fs::write(&p, "chain,iteration,parameter,value\n0,0,a,1\n0,0,b,2\n0,1,a,3\n").unwrap();
    let e = read_draws(&p, None).unwrap_err();
    assert!(matches!(e, IoError::Format { .. }), "{e}");
    assert!(e.to_string().contains("draws.csv"));
}
