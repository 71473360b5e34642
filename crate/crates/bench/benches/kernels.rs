use std::time::Duration;

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use superlab_core::simulator::replicate_rng;
use superlab_core::*;

fn cumulant(c: &mut Criterion) {
    let opts = SolverOptions::default();
    let two = presets::two_site();
    let three = presets::three_site_mixed();
    let f = Field(vec![1.0, 1.0]);
    c.bench_function("cumulant two-site T=1e4", |b| {
        b.iter(|| solve_cumulant(&two, black_box(&f), &[1e4], &opts).unwrap())
    });
    c.bench_function("extinction three-site T=1e5", |b| {
        b.iter(|| solve_extinction(&three, black_box(&[1e5]), &opts).unwrap())
    });
}

fn sampler(c: &mut Criterion) {
    let mut rng = replicate_rng(1, 0);
    c.bench_function("positive stable gamma=1.5", |b| {
        b.iter(|| sample_positive_stable(black_box(1.5), &mut rng))
    });
    let model = presets::two_site();
    let mu = InitialMeasure::new(vec![0.5, 0.5]).unwrap();
    let f = Field(vec![1.0, 1.0]);
    let config = SimConfig::new(1e-2, 1.0, 1000, 3);
    c.bench_function("simulate two-site 1000 paths", |b| {
        b.iter(|| simulate_paths(&model, &mu, &f, black_box(&config)).unwrap())
    });
}

fn spine(c: &mut Criterion) {
    let model = presets::two_site();
    let opts = SolverOptions::default();
    let f = Field(vec![1.0, 1.0]);
    let config = FeynmanKacConfig::new(1.0, 2.0, 1000, 5);
    c.bench_function("feynman-kac two-site 1000 paths", |b| {
        b.iter(|| feynman_kac_estimate(&model, &f, black_box(&config), &opts).unwrap())
    });
}

fn delay(c: &mut Criterion) {
    let prob = DelayEquationProblem::uniform(1.5, 10.0, 0.01, 1e-10).unwrap();
    c.bench_function("delay equation a=1.5", |b| b.iter(|| solve_delay_equation(black_box(&prob)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20).measurement_time(Duration::from_secs(5));
    targets = cumulant, sampler, spine, delay
}
criterion_main!(benches);
