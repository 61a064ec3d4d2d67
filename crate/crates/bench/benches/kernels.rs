use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swissmob::extensions::{icar_scaling_factor, Adjacency};
use swissmob::synth::{generate, SynthConfig};
use swissmob::telecom::{extract_trips, Point, PositionEstimate, DAY};
use swissmob::{sample, LogDensity, MobilityVar, ModelSpec, PanelModel, SamplerConfig};

fn gradients(c: &mut Criterion) {
    let sp = generate(&SynthConfig::default(), 1).unwrap();
    for (name, spec) in [
        ("mobility", ModelSpec::mobility(MobilityVar::Total)),
        ("cases_lag7", ModelSpec::cases(MobilityVar::Total, 7)),
        ("mediation", ModelSpec::mediation(MobilityVar::Total, 7)),
    ] {
        let model = PanelModel::new(&spec, &sp.panel).unwrap();
        let x = vec![0.01; model.dim()];
        let mut g = vec![0.0; model.dim()];
        c.bench_function(&format!("log_density_grad/{name}/26x42"), |b| {
            b.iter(|| model.log_density_grad(black_box(&x), &mut g))
        });
    }
}

fn nuts(c: &mut Criterion) {
    let sp = generate(&SynthConfig::small(6, 28), 2).unwrap();
    let model = PanelModel::new(&ModelSpec::mobility(MobilityVar::Total), &sp.panel).unwrap();
    let cfg = SamplerConfig { chains: 1, warmup: 100, samples: 100, seed: 3, ..Default::default() };
    let mut group = c.benchmark_group("nuts");
    group.sample_size(10);
    group.bench_function("mobility/6x28/1x(100+100)", |b| b.iter(|| sample(&model, &cfg).unwrap()));
    group.finish();
}

fn trips(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut t = 0;
    let mut pc = 0;
    let trace: Vec<PositionEstimate> = (0..20_000)
        .map(|_| {
            if rng.random::<f64>() < 0.1 {
                pc = rng.random_range(0..5u32);
            }
            t += rng.random_range(1..600);
            PositionEstimate { device: 1, timestamp: t, location: Point::new(pc as f64, 0.0), postcode: pc }
        })
        .collect();
    assert!(trace.last().unwrap().timestamp > DAY);
    c.bench_function("extract_trips/20k_pings", |b| b.iter(|| extract_trips(black_box(&trace)).unwrap()));
}

fn icar(c: &mut Criterion) {
    let adj = Adjacency::swiss();
    c.bench_function("icar_scaling_factor/swiss", |b| b.iter(|| icar_scaling_factor(black_box(&adj)).unwrap()));
}

criterion_group!(benches, gradients, nuts, trips, icar);
criterion_main!(benches);
