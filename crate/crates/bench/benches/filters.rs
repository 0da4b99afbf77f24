use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rdmest::baselines::{pf_rd_run, standard_pf_run};
use rdmest::channel::{simulate_channel, ChannelState};
use rdmest::gauss::{cubature_transform, gaf_run, GafConfig};
use rdmest::models::simulate_truth;
use rdmest::rng::seeded;
use rdmest::smc::{smc_run, SmcConfig};
use rdmest::{ChannelEvent, CoordinatedTurn, DelayProfile, GrowthModel, Matrix, SystemModel, Vector};

const STEPS: usize = 50;
const PARTICLES: usize = 500;

fn growth_run() -> (GrowthModel, DelayProfile, Vec<ChannelEvent>) {
    let model = GrowthModel::default();
    let profile = DelayProfile::constant(0.8, 3).unwrap();
    let truth = simulate_truth(&model, STEPS, &mut seeded(1)).unwrap();
    let events = simulate_channel(&profile, &truth.measurements, &mut seeded(2));
    (model, profile, events)
}

fn filters(c: &mut Criterion) {
    let (model, profile, events) = growth_run();
    let cfg = SmcConfig::new(PARTICLES);
    let mut g = c.benchmark_group("growth_50_steps");
    g.bench_function("gaf", |b| b.iter(|| gaf_run(&model, &profile, &events, STEPS, GafConfig::default()).unwrap()));
    g.bench_function("smc", |b| b.iter(|| smc_run(&model, &profile, &events, STEPS, cfg, &mut seeded(3)).unwrap()));
    g.bench_function("standard_pf", |b| b.iter(|| standard_pf_run(&model, &events, STEPS, cfg, &mut seeded(3)).unwrap()));
    g.bench_function("pf_rd", |b| b.iter(|| pf_rd_run(&model, &profile, &events, STEPS, cfg, &mut seeded(3)).unwrap()));
    g.finish();
}

fn channel(c: &mut Criterion) {
    let profile = DelayProfile::constant(0.9, 3).unwrap();
    let z = Vector::from_element(2, 1.0);
    c.bench_function("channel_1000_steps", |b| {
        b.iter_batched(
            || (ChannelState::new(3), seeded(4)),
            |(mut state, mut rng)| {
                for k in 1..=1000 {
                    state.step(&profile, k, z.clone(), &mut rng);
                }
                state
            },
            BatchSize::SmallInput,
        )
    });
}

fn cubature(c: &mut Criterion) {
    let model = CoordinatedTurn::default();
    let mean = model.initial_mean();
    let cov = model.initial_cov();
    c.bench_function("cubature_ct_measurement", |b| {
        b.iter(|| cubature_transform(&mean, &cov, |x| model.measurement(1, x)).unwrap())
    });
    let window = Matrix::identity(20, 20);
    let m = Vector::zeros(20);
    c.bench_function("cubature_identity_dim20", |b| b.iter(|| cubature_transform(&m, &window, |x| x.clone()).unwrap()));
}

criterion_group!(benches, filters, channel, cubature);
criterion_main!(benches);
