use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use tvfl_bench::{channel, dataset, full_batch, network};
use tvfl_core::channel::{exp_integral_e1, inv_exp_integral};
use tvfl_core::experiment::Preset;
use tvfl_core::nn::LossSpec;
use tvfl_core::trainer::run_round;

fn special_function(c: &mut Criterion) {
    let xs: Vec<f64> = (0..64).map(|i| 1e-3 * 1.15f64.powi(i)).collect();
    c.bench_function("e1/64 points", |b| {
        b.iter(|| xs.iter().map(|&x| exp_integral_e1(black_box(x)).unwrap()).sum::<f64>())
    });
    c.bench_function("e1 inverse", |b| b.iter(|| inv_exp_integral(black_box(0.4)).unwrap()));
    let ch = channel(8);
    c.bench_function("align 8 SUs", |b| {
        b.iter(|| ch.thresholds_for_ratio(black_box(0.4)).unwrap())
    });
}

fn forward_backward(c: &mut Criterion) {
    let ds = dataset(4, 257);
    let mut group = c.benchmark_group("gradient/256 samples");
    for (name, preset) in [("network-i", Preset::NetworkI), ("network-ii", Preset::NetworkII)] {
        let net = network(&preset, &ds, 256);
        let (batch, _) = full_batch(&net, &ds);
        group.bench_function(name, |b| {
            b.iter(|| net.gradient(&batch.features, &batch.labels, &LossSpec::default()).unwrap())
        });
    }
    group.finish();
}

fn training_round(c: &mut Criterion) {
    let ds = dataset(4, 257);
    let net = network(&Preset::NetworkII, &ds, 256);
    let (batch, cache) = full_batch(&net, &ds);
    let mut group = c.benchmark_group("round/network-ii/256 samples");
    for (name, active) in [("all active", [true; 4]), ("two silent", [true, false, true, false])] {
        group.bench_function(name, |b| {
            b.iter_batched(
                || (net.clone(), cache.clone()),
                |(mut n, mut k)| {
                    run_round(&mut n, &batch, &active, &mut k, 1, 1e-4, &LossSpec::default(), true)
                        .unwrap()
                },
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, special_function, forward_backward, training_round);
criterion_main!(benches);
