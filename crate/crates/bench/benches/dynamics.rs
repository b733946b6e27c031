use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use csgnn_bench::{network, rng, sbm, symmetric_matrix, SIZES};
use csgnn_core::features::feature_step;
use csgnn_core::train::backward::backward;
use csgnn_core::train::loss::masked_cross_entropy_with_grad;
use csgnn_core::{adjacency_step, forward, AdjacencyStepConfig, EquivariantCoeffs, LeakyRelu, Mode};
use std::hint::black_box;

fn adjacency(c: &mut Criterion) {
    let act = LeakyRelu::default();
    let coeffs = EquivariantCoeffs::with_slope([0.05, -0.03, 0.02, 0.04, -0.01, 0.03, -0.02, 0.01], -1.0, act.slope())
        .expect("coefficients");
    let cfg = AdjacencyStepConfig::clamped(coeffs, 0.5, act).expect("step config");
    let mut group = c.benchmark_group("adjacency_step");
    for n in SIZES {
        let a = symmetric_matrix(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &a, |b, a| {
            b.iter(|| adjacency_step(black_box(&a.view()), &cfg).expect("step"))
        });
    }
    group.finish();
}

fn features(c: &mut Criterion) {
    let mut group = c.benchmark_group("feature_step");
    for n in SIZES {
        let g = sbm(n, 2);
        let params = network(&g, 2);
        let block = params.layer(0);
        let f = g.features.dot(&params.encoder);
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| {
                feature_step(
                    black_box(&f.view()),
                    &g.adjacency.view(),
                    &block.feature,
                    params.activation(),
                )
                .expect("step")
            })
        });
    }
    group.finish();
}

fn forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_backward");
    for n in SIZES {
        let g = sbm(n, 3);
        let params = network(&g, 3);
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            let mut r = rng(3);
            b.iter(|| {
                let (logits, trace) = forward(&g, &params, Mode::Train, &mut r).expect("forward");
                let (_, grad) = masked_cross_entropy_with_grad(&logits.view(), &g.labels, &g.train_mask).expect("loss");
                backward(&trace, &params, &grad.view()).expect("backward")
            })
        });
    }
    group.finish();
}

criterion_group!(benches, adjacency, features, forward_backward);
criterion_main!(benches);
