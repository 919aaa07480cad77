//! Shared helpers for the integration suites: an independent 1-d
//! Wasserstein oracle via quantile coupling and small random-instance
//! generators.

// each integration target compiles its own copy and uses a subset
#![allow(dead_code)]

use kernelgrid::transport::DiscreteMeasure;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Order-`p` Wasserstein distance between two discrete distributions on the
/// real line via the closed-form quantile coupling: sort both supports and
/// match mass in CDF order. Entirely independent of the simplex solver.
pub fn wasserstein_1d(a: &[(f64, f64)], b: &[(f64, f64)], p: f64) -> f64 {
    let mut a: Vec<(f64, f64)> = a.iter().copied().filter(|&(_, w)| w > 0.0).collect();
    let mut b: Vec<(f64, f64)> = b.iter().copied().filter(|&(_, w)| w > 0.0).collect();
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    b.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut total = 0.0;
    loop {
        let m = ra.min(rb);
        total += m * (a[i].0 - b[j].0).abs().powf(p);
        ra -= m;
        rb -= m;
        if ra <= 1e-15 {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = a[i].1;
        }
        if rb <= 1e-15 {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    total.powf(1.0 / p)
}

/// Random normalized weight vector with strictly positive entries.
pub fn random_weights(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    let sum: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / sum).collect();
    let excess: f64 = w.iter().sum::<f64>() - 1.0;
    let last = w.len() - 1;
    w[last] -= excess;
    w
}

/// Random discrete measure with `n` atoms in `dim` dimensions.
pub fn random_measure(rng: &mut ChaCha12Rng, n: usize, dim: usize, scale: f64) -> DiscreteMeasure {
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random::<f64>() * scale).collect())
        .collect();
    let weights = random_weights(rng, n);
    DiscreteMeasure::new(points, weights).expect("valid random measure")
}

/// View a 1-d measure as (point, weight) pairs for the oracle.
pub fn pairs_1d(m: &DiscreteMeasure) -> Vec<(f64, f64)> {
    m.points()
        .iter()
        .zip(m.weights())
        .map(|(x, &w)| (x[0], w))
        .collect()
}
