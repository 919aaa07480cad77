//! Metric axioms and ordering properties of the kernel distance.

mod common;

use common::{random_measure, random_weights};
use kernelgrid::kernel_metric::{
    hierarchy_triple, itd, strictness_example, sup_distance, DiscreteKernel, Marginal,
};
use kernelgrid::lattice::stream_rng;
use kernelgrid::transport::{DiscreteMeasure, GroundCost};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

fn random_kernel(rng: &mut ChaCha12Rng, sources: &[Vec<f64>], support: usize) -> DiscreteKernel {
    let rows = sources
        .iter()
        .map(|_| {
            let atoms = 1 + rng.random_range(0..support);
            random_measure(rng, atoms, 2, 3.0)
        })
        .collect();
    DiscreteKernel::new(sources.to_vec(), rows).unwrap()
}

fn random_sources(rng: &mut ChaCha12Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..2).map(|_| rng.random::<f64>() * 3.0).collect())
        .collect()
}

#[test]
fn metric_axioms_on_random_triples() {
    let cost = GroundCost::order_one();
    for seed in 0..300u64 {
        let mut rng = stream_rng(seed, "axioms", &[]);
        let n = 1 + rng.random_range(0..4);
        let sources = random_sources(&mut rng, n);
        let lambda = Marginal::new(
            DiscreteMeasure::new(sources.clone(), random_weights(&mut rng, n)).unwrap(),
        );
        let a = random_kernel(&mut rng, &sources, 4);
        let b = random_kernel(&mut rng, &sources, 4);
        let c = random_kernel(&mut rng, &sources, 4);

        let ab = itd(&lambda, &a, &b, &cost).unwrap();
        let ba = itd(&lambda, &b, &a, &cost).unwrap();
        assert!((ab - ba).abs() <= 1e-9, "seed {seed}: ab={ab} ba={ba}");

        let aa = itd(&lambda, &a, &a, &cost).unwrap();
        assert!(aa.abs() <= 1e-9, "seed {seed}: self-distance {aa}");

        let ac = itd(&lambda, &a, &c, &cost).unwrap();
        let bc = itd(&lambda, &b, &c, &cost).unwrap();
        assert!(ac <= ab + bc + 1e-9, "seed {seed}: ac={ac} ab={ab} bc={bc}");

        assert!(ab <= sup_distance(&a, &b, &cost).unwrap() + 1e-9);
    }
}

#[test]
fn hierarchy_holds_on_random_instances() {
    let cost = GroundCost::order_one();
    for seed in 0..150u64 {
        let mut rng = stream_rng(seed, "hierarchy", &[]);
        let n = 1 + rng.random_range(0..4);
        let sources = random_sources(&mut rng, n);
        let lambda = Marginal::new(
            DiscreteMeasure::new(sources.clone(), random_weights(&mut rng, n)).unwrap(),
        );
        let a = random_kernel(&mut rng, &sources, 4);
        let b = random_kernel(&mut rng, &sources, 4);
        // hierarchy_triple errors out if the ordering is violated
        let (d_itd, joined, mixed) = hierarchy_triple(&lambda, &a, &b, &cost).unwrap();
        assert!(d_itd + 1e-9 >= joined && joined + 1e-9 >= mixed,
            "seed {seed}: {d_itd} {joined} {mixed}");
    }
}

#[test]
fn strictness_gaps_scale_with_source_separation() {
    let cost = GroundCost::order_one();
    for eps in [0.1, 0.5, 0.9] {
        let (lambda, q, q_tilde) = strictness_example(eps);
        let (d_itd, joined, mixed) = hierarchy_triple(&lambda, &q, &q_tilde, &cost).unwrap();
        assert!((d_itd - 1.0).abs() <= 1e-12, "eps={eps}: itd={d_itd}");
        assert!((joined - eps).abs() <= 1e-12, "eps={eps}: joined={joined}");
        assert!(mixed.abs() <= 1e-12, "eps={eps}: mixed={mixed}");
    }
}

#[test]
fn itd_respects_higher_orders() {
    // degree-2 aggregation dominates degree-1 for the same kernels
    let c1 = GroundCost::order_one();
    let c2 = GroundCost::new(2.0).unwrap();
    for seed in 0..50u64 {
        let mut rng = stream_rng(seed, "orders", &[]);
        let sources = random_sources(&mut rng, 3);
        let lambda = Marginal::new(
            DiscreteMeasure::new(sources.clone(), random_weights(&mut rng, 3)).unwrap(),
        );
        let a = random_kernel(&mut rng, &sources, 3);
        let b = random_kernel(&mut rng, &sources, 3);
        let d1 = itd(&lambda, &a, &b, &c1).unwrap();
        let d2 = itd(&lambda, &a, &b, &c2).unwrap();
        assert!(d1 <= d2 + 1e-9, "seed {seed}: {d1} vs {d2}");
    }
}
