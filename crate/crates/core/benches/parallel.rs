use criterion::{criterion_group, criterion_main, Criterion};
use kernelgrid::exec::{map_indexed, map_indexed_seq};
use kernelgrid::kernel_metric::{itd, DiscreteKernel, Marginal};
use kernelgrid::markets::{binomial_price_american, BasketPut, GbmModel};
use kernelgrid::transport::{wasserstein_exact, DiscreteMeasure, GroundCost};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::hint::black_box;

fn random_points(rng: &mut ChaCha12Rng, n: usize, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random::<f64>() * scale).collect())
        .collect()
}

fn random_kernel(rng: &mut ChaCha12Rng, sources: usize, support: usize) -> DiscreteKernel {
    let src = random_points(rng, sources, 2, 1.0);
    let rows = (0..sources)
        .map(|_| {
            let pts = random_points(rng, support, 2, 1.0);
            DiscreteMeasure::uniform(pts).unwrap()
        })
        .collect();
    DiscreteKernel::new(src, rows).unwrap()
}

// The per-source transport solves are the data-parallel hot loop; compare
// the rayon path (enabled by the default `parallel` feature) against a
// hand-rolled sequential evaluation of the same distances.
fn bench_itd(c: &mut Criterion) {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    let a = random_kernel(&mut rng, 24, 40);
    let b = random_kernel(&mut rng, 24, 40);
    let lambda = Marginal::uniform(&a);
    let cost = GroundCost::order_one();

    let mut group = c.benchmark_group("itd-24x40");
    group.bench_function("configured", |bencher| {
        bencher.iter(|| itd(&lambda, black_box(&a), black_box(&b), &cost).unwrap())
    });
    group.bench_function("sequential", |bencher| {
        bencher.iter(|| {
            let dists = map_indexed_seq(a.sources().len(), |s| {
                wasserstein_exact(a.row(s), b.row(s), &cost).unwrap().0
            });
            black_box(dists.iter().sum::<f64>() / dists.len() as f64)
        })
    });
    group.finish();
}

fn bench_pricing(c: &mut Criterion) {
    let model = GbmModel::new(
        vec![10.0, 10.0],
        0.03,
        vec![vec![0.5, -0.2], [-0.2, 0.5].to_vec()],
        1.0,
        30,
    )
    .unwrap();
    let option = BasketPut { strike: 10.0, weights: vec![0.5, 0.5] };
    c.bench_function("binomial-2d-n30", |bencher| {
        bencher.iter(|| binomial_price_american(black_box(&model), black_box(&option)).unwrap())
    });
}

fn bench_map(c: &mut Criterion) {
    let work = |i: usize| -> u64 {
        let mut acc = i as u64;
        for _ in 0..20_000 {
            acc = acc.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        }
        acc
    };
    let mut group = c.benchmark_group("map-indexed");
    group.bench_function("configured", |bencher| {
        bencher.iter(|| black_box(map_indexed(black_box(512), work)))
    });
    group.bench_function("sequential", |bencher| {
        bencher.iter(|| black_box(map_indexed_seq(black_box(512), work)))
    });
    group.finish();
}

criterion_group!(benches, bench_itd, bench_pricing, bench_map);
criterion_main!(benches);
