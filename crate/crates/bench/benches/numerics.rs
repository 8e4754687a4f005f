use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use treegibbs::{
    beta_threshold, fuzzy_chain, fuzzy_q, increment_laws, norm_pair, periodic_solve, wn_ggm_series, NormDomain,
    Operator, Pairing, Potential, SolveConfig,
};

fn norms(c: &mut Criterion) {
    let mut g = c.benchmark_group("norm_pair");
    for (name, pot) in [("sos_2", Potential::sos(2.0).unwrap()), ("log_3", Potential::log(3.0).unwrap())] {
        g.bench_function(name, |b| b.iter(|| norm_pair(black_box(&pot), 3, 1e-12).unwrap()));
    }
    let heavy = Potential::log(0.9).unwrap();
    g.bench_function("log_0.9_delta_d8", |b| {
        b.iter(|| treegibbs::p_norm(black_box(&heavy), 9.0, NormDomain::ZWithoutZero, 1e-12).unwrap())
    });
    g.finish();
}

fn thresholds(c: &mut Criterion) {
    let base = Potential::sos(1.0).unwrap();
    let mut g = c.benchmark_group("beta_threshold");
    for d in [2u32, 100] {
        g.bench_with_input(BenchmarkId::new("sos", d), &d, |b, &d| {
            b.iter(|| beta_threshold(&base, d, Pairing::HalfNorm, 1e-9).unwrap())
        });
    }
    g.finish();
}

fn apply_operator(c: &mut Criterion) {
    let pot = Potential::log(3.0).unwrap();
    let mut g = c.benchmark_group("apply_T");
    for radius in [256usize, 4096, 65_536] {
        let op = Operator::truncated(&pot, 2, radius).unwrap();
        let x = op.kernel_start();
        g.bench_with_input(BenchmarkId::from_parameter(radius), &radius, |b, _| b.iter(|| op.apply(black_box(&x))));
    }
    g.finish();
}

fn ggm_dp(c: &mut Criterion) {
    let pot = Potential::sos(2.0).unwrap();
    let (bl, _) = periodic_solve(&pot, 2, 2, &SolveConfig::default()).unwrap();
    let fc = fuzzy_chain(&bl, &fuzzy_q(&pot, 2, 1e-14).unwrap()).unwrap();
    let laws = increment_laws(&pot, 2, 1e-13).unwrap();
    c.bench_function("wn_ggm_series_q2_n128", |b| {
        b.iter(|| wn_ggm_series(&fc, &laws, black_box(&[8, 32, 128]), 80, 1e-9).unwrap())
    });
}

criterion_group!(benches, norms, thresholds, apply_operator, ggm_dp);
criterion_main!(benches);
