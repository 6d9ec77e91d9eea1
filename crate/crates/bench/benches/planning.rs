use std::hint::black_box;
use bam_core::control::{run_trial, CartpoleParams, CartpoleState, ModelConfig, Mppi, MppiConfig, PlannerModel, TrialPolicy};
use bam_core::{Conjugate, StreamFactory};
use criterion::{criterion_group, criterion_main, Criterion};

fn planning(c: &mut Criterion) {
    let streams = StreamFactory::new(4);
    let model = ModelConfig::default();
    let rff = model.rff(&streams).unwrap();
    let env = CartpoleParams::default();
    let cfg = MppiConfig::default();
    let mut rng = streams.stream(&["bench", "trial"], 0);
    let random = run_trial(TrialPolicy::Random, &rff, &env, &cfg, 100, &mut rng).unwrap();
    let belief = model.base().unwrap().posterior(&random.batch.stats(&rff).unwrap()).unwrap();
    let sampler = belief.sampler().unwrap();
    let state = CartpoleState::hanging();

    let mut group = c.benchmark_group("mppi_plan");
    group.sample_size(10);
    group.bench_function("learned", |b| {
        let mut planner = Mppi::new(cfg.clone()).unwrap();
        b.iter(|| planner.plan(PlannerModel::Learned { sampler: &sampler, rff: &rff }, black_box(&state), &mut rng).unwrap())
    });
    group.bench_function("exact", |b| {
        let mut planner = Mppi::new(cfg.clone()).unwrap();
        b.iter(|| planner.plan(PlannerModel::Exact(env), black_box(&state), &mut rng).unwrap())
    });
    group.bench_function("sampler_from_belief", |b| b.iter(|| black_box(&belief).sampler().unwrap()));
    group.finish();
}

criterion_group!(benches, planning);
criterion_main!(benches);
