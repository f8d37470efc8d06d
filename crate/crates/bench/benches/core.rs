use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nngpvae::elbo::{value_and_grad, ElboInputs, MiniBatch, Objective};
use nngpvae::kernels::{KernelKind, KernelSpec};
use nngpvae::linalg::{cholesky_default, Matrix};
use nngpvae::neighbours::{NeighbourIndex, NeighbourSets};
use nngpvae::nets::LikelihoodFamily;
use nngpvae::rng::{standard_normal_matrix, stream, Purpose};
use nngpvae::runner::suites::{toy_model, toy_series};

fn cholesky(c: &mut Criterion) {
    let mut g = c.benchmark_group("cholesky");
    let kernel = KernelSpec::new(KernelKind::Matern32, 2.0, 1.0).unwrap();
    for n in [10, 50, 200] {
        let x = Matrix::from_fn(n, 1, |i, _| i as f64);
        let k = kernel.eval(&x, &x).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &k, |b, k| b.iter(|| cholesky_default(black_box(k)).unwrap()));
    }
    g.finish();
}

fn knn(c: &mut Criterion) {
    let mut g = c.benchmark_group("knn");
    let x = standard_normal_matrix(&mut stream(0, Purpose::GridPoints, 0), 2000, 2);
    for h in [5, 20] {
        let index = NeighbourIndex::new(x.clone(), h);
        g.bench_with_input(BenchmarkId::new("spa_sets", h), &index, |b, ix| b.iter(|| NeighbourSets::spa(black_box(ix))));
        g.bench_with_input(BenchmarkId::new("query", h), &index, |b, ix| b.iter(|| ix.knn_query(black_box(&[0.1, -0.2])).unwrap()));
    }
    g.finish();
}

fn elbo_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("value_and_grad");
    let n = 512;
    let data = toy_series(0, n, 8, 0.05).unwrap();
    let params = toy_model(0, 8, 2, 64, LikelihoodFamily::Gaussian).unwrap();
    let eps = standard_normal_matrix(&mut stream(0, Purpose::Eps, 0), n, 2);
    let batch = MiniBatch::new((0..n).step_by(4).collect());
    let sets = NeighbourSets::spa(&NeighbourIndex::new(data.x.clone(), 10));
    for (name, objective, sets) in [("vae", Objective::Vae, None), ("spa_h10", Objective::GpvaeSpa, Some(&sets))] {
        let inp = ElboInputs { data: &data, objective, sets, batch: &batch, beta: 1.0, eps: &eps };
        g.bench_function(name, |b| b.iter(|| value_and_grad(black_box(&params), inp).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, cholesky, knn, elbo_step);
criterion_main!(benches);
