use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sil_bench::{random_costs, random_vector};
use sil_core::nn::{mlp_backward, mlp_forward};
use sil_core::ot::{cosine_cost_matrix, sinkhorn};
use sil_core::{Activation, Marginals, MlpSpec, SinkhornSettings};
use std::hint::black_box;

fn sinkhorn_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("sinkhorn");
    group.sample_size(10);
    for (n, eps) in [(32, 0.05), (64, 0.05), (64, 0.005)] {
        let cost = random_costs(n, n, n as u64);
        let marginals = Marginals::uniform(n, n);
        let settings = SinkhornSettings {
            epsilon: eps,
            ..SinkhornSettings::default()
        };
        group.bench_with_input(BenchmarkId::new(format!("eps{eps}"), n), &n, |b, _| {
            b.iter(|| sinkhorn(black_box(&cost), &marginals, &settings).unwrap())
        });
    }
    group.finish();
}

fn cosine_costs(c: &mut Criterion) {
    let rows = |seed: u64| -> Vec<Vec<f64>> { (0..32).map(|k| random_vector(16, seed * 100 + k)).collect() };
    let (a, b) = (rows(1), rows(2));
    c.bench_function("cosine_cost_32x32x16", |bench| bench.iter(|| cosine_cost_matrix(black_box(&a), black_box(&b)).unwrap()));
}

fn mlp(c: &mut Criterion) {
    let spec = MlpSpec::new(vec![8, 32, 32, 4], Activation::Tanh).unwrap();
    let params = random_vector(spec.param_count(), 3);
    let x = random_vector(8, 4);
    let upstream = random_vector(4, 5);
    c.bench_function("mlp_forward_8_32_32_4", |b| b.iter(|| mlp_forward(&spec, black_box(&params), black_box(&x)).unwrap()));
    c.bench_function("mlp_forward_backward_8_32_32_4", |b| {
        b.iter(|| {
            let (_, tape) = mlp_forward(&spec, &params, black_box(&x)).unwrap();
            mlp_backward(&spec, &params, &tape, black_box(&upstream)).unwrap()
        })
    });
}

criterion_group!(benches, sinkhorn_solve, cosine_costs, mlp);
criterion_main!(benches);
