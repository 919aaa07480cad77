//! Property-based checks of the exact transport solver, the dual
//! certificate, and the entropic approximation.

mod common;

use common::{pairs_1d, random_measure};
use kernelgrid::lattice::stream_rng;
use kernelgrid::transport::{
    kr_dual_check, wasserstein_exact, wasserstein_sinkhorn, DiscreteMeasure, GroundCost,
};
use proptest::prelude::*;

fn measure_strategy(dim: usize) -> impl Strategy<Value = DiscreteMeasure> {
    (1usize..6).prop_flat_map(move |n| {
        (
            proptest::collection::vec(
                proptest::collection::vec(-5.0f64..5.0, dim..=dim),
                n..=n,
            ),
            proptest::collection::vec(0.05f64..1.0, n..=n),
        )
            .prop_map(|(points, raw)| {
                let sum: f64 = raw.iter().sum();
                let mut w: Vec<f64> = raw.iter().map(|x| x / sum).collect();
                let excess: f64 = w.iter().sum::<f64>() - 1.0;
                let last = w.len() - 1;
                w[last] -= excess;
                DiscreteMeasure::new(points, w).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetry(a in measure_strategy(2), b in measure_strategy(2)) {
        let cost = GroundCost::order_one();
        let (ab, _) = wasserstein_exact(&a, &b, &cost).unwrap();
        let (ba, _) = wasserstein_exact(&b, &a, &cost).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-10, "ab={ab} ba={ba}");
    }

    #[test]
    fn identity_of_indiscernibles(a in measure_strategy(2)) {
        let cost = GroundCost::order_one();
        let (d, _) = wasserstein_exact(&a, &a, &cost).unwrap();
        prop_assert!(d.abs() <= 1e-12);
    }

    #[test]
    fn triangle_inequality(
        a in measure_strategy(2),
        b in measure_strategy(2),
        c in measure_strategy(2),
    ) {
        let cost = GroundCost::order_one();
        let (ac, _) = wasserstein_exact(&a, &c, &cost).unwrap();
        let (ab, _) = wasserstein_exact(&a, &b, &cost).unwrap();
        let (bc, _) = wasserstein_exact(&b, &c, &cost).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9, "ac={ac} ab={ab} bc={bc}");
    }

    #[test]
    fn order_monotonicity(a in measure_strategy(2), b in measure_strategy(2)) {
        // W_p is non-decreasing in p (Jensen on the optimal coupling)
        let (w1, _) = wasserstein_exact(&a, &b, &GroundCost::order_one()).unwrap();
        let (w2, _) = wasserstein_exact(&a, &b, &GroundCost::new(2.0).unwrap()).unwrap();
        prop_assert!(w1 <= w2 + 1e-9, "w1={w1} w2={w2}");
    }

    #[test]
    fn matches_quantile_oracle_in_1d(a in measure_strategy(1), b in measure_strategy(1)) {
        for p in [1.0, 2.0] {
            let cost = GroundCost::new(p).unwrap();
            let (d, _) = wasserstein_exact(&a, &b, &cost).unwrap();
            let oracle = common::wasserstein_1d(&pairs_1d(&a), &pairs_1d(&b), p);
            prop_assert!((d - oracle).abs() <= 1e-9, "p={p} solver={d} oracle={oracle}");
        }
    }

    #[test]
    fn dual_gap_vanishes(a in measure_strategy(2), b in measure_strategy(2)) {
        let cost = GroundCost::order_one();
        let (_, plan) = wasserstein_exact(&a, &b, &cost).unwrap();
        let gap = kr_dual_check(&a, &b, &plan, &cost).unwrap();
        prop_assert!(gap <= 1e-9, "gap={gap}");
    }

    #[test]
    fn plan_conserves_mass(a in measure_strategy(2), b in measure_strategy(2)) {
        let cost = GroundCost::order_one();
        let (_, plan) = wasserstein_exact(&a, &b, &cost).unwrap();
        prop_assert!(plan.marginal_violation() <= 1e-10);
        for (r, w) in plan.row_sums().iter().zip(a.weights()) {
            prop_assert!((r - w).abs() <= 1e-10);
        }
        for (c, w) in plan.col_sums().iter().zip(b.weights()) {
            prop_assert!((c - w).abs() <= 1e-10);
        }
    }

    #[test]
    fn sinkhorn_upper_bounds_exact(a in measure_strategy(2), b in measure_strategy(2)) {
        let cost = GroundCost::order_one();
        let (exact, _) = wasserstein_exact(&a, &b, &cost).unwrap();
        let out = wasserstein_sinkhorn(&a, &b, &cost, 1e-2, 1e-9, 100_000).unwrap();
        prop_assert!(out.converged);
        prop_assert!(out.marginal_error <= 1e-9);
        // feasible-plan cost can only exceed the optimum (up to the tiny
        // marginal slack); the entropic blur keeps it within a loose band
        prop_assert!(out.distance_estimate >= exact - 1e-6,
            "sinkhorn={} exact={exact}", out.distance_estimate);
        prop_assert!(out.distance_estimate <= exact + 0.5,
            "sinkhorn={} exact={exact}", out.distance_estimate);
    }
}

#[test]
fn randomized_oracle_sweep() {
    // denser deterministic sweep than the proptest sampler
    let mut worst = 0.0f64;
    for seed in 0..200u64 {
        let mut rng = stream_rng(seed, "oracle-sweep", &[]);
        let a = random_measure(&mut rng, 1 + (seed as usize % 7), 1, 4.0);
        let b = random_measure(&mut rng, 1 + (seed as usize % 5), 1, 4.0);
        let cost = GroundCost::order_one();
        let (d, _) = wasserstein_exact(&a, &b, &cost).unwrap();
        let oracle = common::wasserstein_1d(&pairs_1d(&a), &pairs_1d(&b), 1.0);
        worst = worst.max((d - oracle).abs());
    }
    assert!(worst <= 1e-9, "worst deviation {worst}");
}
