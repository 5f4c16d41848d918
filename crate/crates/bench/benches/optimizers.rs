use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hrris::beamforming::{optimize_dynamic_hrris, optimize_fixed_hrris, optimize_passive};
use hrris::experiment::{run_trial, Scheme};
use hrris::linalg::{CMatrix, C64};
use hrris::rate::spectral_efficiency;
use hrris::relay::relay_experiment;
use hrris::{CoeffProfile, SurfaceConfig};
use hrris_bench::fixture;

fn rate(c: &mut Criterion) {
    let (spec, ch) = fixture(64);
    let nt = ch.bs_antennas();
    let q = CMatrix::identity(nt, nt) * C64::new(spec.power.bs_tx_power / nt as f64, 0.0);
    let p = CoeffProfile::passive_zero(64);
    c.bench_function("spectral_efficiency/n64", |b| {
        b.iter(|| spectral_efficiency(&ch.h1, &ch.h2, black_box(&p), &q, &spec.noise).unwrap())
    });
}

fn optimizers(c: &mut Criterion) {
    let mut g = c.benchmark_group("optimize");
    g.sample_size(10);
    let (spec, ch) = fixture(64);
    let bits = spec.surface.phase_bits;
    let budget = spec.surface.active_power_budget;
    g.bench_function("passive/n64", |b| {
        let cfg = SurfaceConfig::passive(64, bits);
        b.iter(|| optimize_passive(&ch, &cfg, &spec.noise, &spec.power, &spec.ao).unwrap())
    });
    for k in [4, 20] {
        g.bench_with_input(BenchmarkId::new("fixed/n64", k), &k, |b, &k| {
            let cfg = SurfaceConfig::fixed_first(64, k, bits, budget);
            b.iter(|| optimize_fixed_hrris(&ch, &cfg, &spec.noise, &spec.power, &spec.ao).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("dynamic/n64", k), &k, |b, &k| {
            let cfg = SurfaceConfig::dynamic(64, k, bits, budget);
            b.iter(|| optimize_dynamic_hrris(&ch, &cfg, &spec.noise, &spec.power, &spec.ao).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("relay", k), &k, |b, &k| {
            let keep: Vec<usize> = (0..k).collect();
            let sub = ch.restrict(&keep);
            let cfg = spec.relay.with_antennas(k);
            b.iter(|| relay_experiment(&sub, &cfg, &spec.noise, &spec.power, &spec.ao).unwrap())
        });
    }
    g.finish();
}

fn trial(c: &mut Criterion) {
    let mut g = c.benchmark_group("trial");
    g.sample_size(10);
    let (spec, _) = fixture(64);
    g.bench_function("hrris-dynamic/k10", |b| {
        b.iter(|| run_trial(&spec, Scheme::HrrisDynamic, 10, black_box(0)))
    });
    g.finish();
}

criterion_group!(benches, rate, optimizers, trial);
criterion_main!(benches);
