use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};

use subglm_core::lasso::{fit_lasso_glm, fit_pilot, PenaltyConfig, PilotFit};
use subglm_core::multistep::{multistep_iterate, MultistepOptions};
use subglm_core::pipeline::{fit_clime, run_dvs, run_simultaneous};
use subglm_core::rng::{streams, SeedSpec};
use subglm_core::simgen::{simulate, SimConfig};
use subglm_core::simplex::solve_lp;
use subglm_core::subsample::poisson_subsample;
use subglm_core::{Dataset, GlmFamily};

const SEED: u64 = 17;

fn setup(preset: &str, n: usize, p: usize, d: usize, rp: f64) -> (GlmFamily, Dataset, PilotFit) {
    let sim = SimConfig::preset(preset, n, p, d).unwrap();
    let data = simulate(&sim, SEED).unwrap().data;
    let family = sim.family();
    let pilot = poisson_subsample(n, rp, SeedSpec::new(SEED, streams::PILOT)).unwrap();
    let fit = fit_pilot(&family, &data, pilot, &PenaltyConfig::default(), SeedSpec::new(SEED, streams::CV_FOLDS)).unwrap();
    (family, data, fit)
}

fn lasso(c: &mut Criterion) {
    let mut group = c.benchmark_group("lasso_pilot");
    for preset in ["linear-a", "logistic-a"] {
        let (family, data, fit) = setup(preset, 20_000, 100, 3, 1000.0);
        group.bench_function(BenchmarkId::from_parameter(preset), |b| {
            b.iter(|| fit_lasso_glm(&family, &data, &fit.pilot, fit.lambda).unwrap())
        });
    }
    group.finish();
}

fn dvs(c: &mut Criterion) {
    let (family, data, fit) = setup("linear-a", 20_000, 100, 3, 1000.0);
    let mut group = c.benchmark_group("dvs");
    group.sample_size(20);
    for r in [500.0, 2000.0] {
        group.bench_with_input(BenchmarkId::from_parameter(r), &r, |b, &r| {
            b.iter(|| run_dvs(&family, &data, &fit, r, 0.05, 2000, SEED).unwrap())
        });
    }
    group.finish();
}

fn multistep(c: &mut Criterion) {
    let (family, data, fit) = setup("linear-a", 20_000, 100, 3, 1000.0);
    c.bench_function("multistep", |b| {
        b.iter(|| multistep_iterate(&family, &data, &fit, &MultistepOptions::default()).unwrap())
    });
}

fn simultaneous(c: &mut Criterion) {
    let (family, data, fit) = setup("linear-a", 10_000, 100, 20, 2000.0);
    let mut group = c.benchmark_group("simultaneous");
    group.sample_size(10);
    group.bench_function("clime", |b| b.iter(|| fit_clime(&family, &data, &fit, 0.5).unwrap()));
    let clime = fit_clime(&family, &data, &fit, 0.5).unwrap();
    group.bench_function("bootstrap_b500", |b| {
        b.iter(|| run_simultaneous(&family, &data, &fit, &clime, 500, true, 0.05, SEED).unwrap())
    });
    group.finish();
}

fn simplex(c: &mut Criterion) {
    // Random feasible packing LPs: min -1ᵀx subject to Ax ≤ 1, A > 0.
    let mut group = c.benchmark_group("simplex");
    for m in [10usize, 40] {
        let rng = SeedSpec::new(SEED, 99);
        let a: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| 0.1 + rng.uniform_at((i * m + j) as u64)).collect())
            .collect();
        let cost = vec![-1.0; m];
        let rhs = vec![1.0; m];
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |bench, _| {
            bench.iter_batched(|| a.clone(), |a| solve_lp(&cost, &a, &rhs), BatchSize::SmallInput)
        });
    }
    group.finish();
}

criterion_group!(benches, lasso, dvs, multistep, simultaneous, simplex);
criterion_main!(benches);
