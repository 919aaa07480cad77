//! Entropically regularized transport via log-domain Sinkhorn iterations.

use super::{check_dims, DiscreteMeasure, GroundCost, TransportError, TransportPlan};

/// Result of a Sinkhorn run. The distance estimate is the `p`-th root of the
/// unregularized cost of the returned plan; since the plan is feasible up to
/// the marginal tolerance, it upper-bounds the exact optimum up to
/// O(epsilon * log) slack plus the marginal violation.
#[derive(Clone, Debug)]
pub struct SinkhornOutcome {
    pub distance_estimate: f64,
    pub plan: TransportPlan,
    pub converged: bool,
    pub iterations: usize,
    pub marginal_error: f64,
}

/// Entropic approximation of the order-`p` Wasserstein distance.
///
/// Iterates until the L1 marginal violation drops below `tol` or `max_iters`
/// is reached; non-convergence is reported through the `converged` flag with
/// the partial plan attached.
pub fn wasserstein_sinkhorn(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &GroundCost,
    epsilon: f64,
    tol: f64,
    max_iters: usize,
) -> Result<SinkhornOutcome, TransportError> {
    if !(epsilon > 0.0) {
        return Err(TransportError::InvalidEpsilon(epsilon));
    }
    check_dims(mu, nu)?;
    let rows = mu.positive_support();
    let cols = nu.positive_support();
    if rows.is_empty() || cols.is_empty() {
        return Err(TransportError::EmptySupport);
    }
    let n = rows.len();
    let m = cols.len();
    let a: Vec<f64> = rows.iter().map(|&i| mu.weights()[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| nu.weights()[j]).collect();
    let mut costs = vec![0.0f64; n * m];
    for (ri, &i) in rows.iter().enumerate() {
        for (cj, &j) in cols.iter().enumerate() {
            costs[ri * m + cj] = cost.eval(&mu.points()[i], &nu.points()[j]);
        }
    }
    let log_a: Vec<f64> = a.iter().map(|w| w.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|w| w.ln()).collect();

    let mut f = vec![0.0f64; n];
    let mut g = vec![0.0f64; m];
    let mut iterations = 0;
    let mut marginal_error = f64::INFINITY;
    let mut converged = false;
    let mut scratch = vec![0.0f64; n.max(m)];

    while iterations < max_iters {
        iterations += 1;
        // f update: row marginals become exact
        for ri in 0..n {
            for cj in 0..m {
                scratch[cj] = (g[cj] - costs[ri * m + cj]) / epsilon;
            }
            f[ri] = epsilon * (log_a[ri] - log_sum_exp(&scratch[..m]));
        }
        // g update: column marginals become exact
        for cj in 0..m {
            for ri in 0..n {
                scratch[ri] = (f[ri] - costs[ri * m + cj]) / epsilon;
            }
            g[cj] = epsilon * (log_b[cj] - log_sum_exp(&scratch[..n]));
        }
        if iterations % 10 == 0 || iterations == max_iters {
            marginal_error = row_violation(&f, &g, &costs, &a, epsilon, n, m);
            if marginal_error <= tol {
                converged = true;
                break;
            }
        }
    }
    if marginal_error.is_infinite() {
        marginal_error = row_violation(&f, &g, &costs, &a, epsilon, n, m);
        converged = marginal_error <= tol;
    }

    let mut matrix = vec![0.0f64; mu.len() * nu.len()];
    for (ri, &i) in rows.iter().enumerate() {
        for (cj, &j) in cols.iter().enumerate() {
            matrix[i * nu.len() + j] = ((f[ri] + g[cj] - costs[ri * m + cj]) / epsilon).exp();
        }
    }
    let plan = TransportPlan::new(matrix, mu.clone(), nu.clone());
    let distance_estimate = cost.distance_from_value(plan.transport_cost(cost));
    Ok(SinkhornOutcome {
        distance_estimate,
        plan,
        converged,
        iterations,
        marginal_error,
    })
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

// After the g update the column marginals are exact; the residual lives in
// the rows.
fn row_violation(
    f: &[f64],
    g: &[f64],
    costs: &[f64],
    a: &[f64],
    epsilon: f64,
    n: usize,
    m: usize,
) -> f64 {
    let mut worst: f64 = 0.0;
    for ri in 0..n {
        let mut sum = 0.0;
        for cj in 0..m {
            sum += ((f[ri] + g[cj] - costs[ri * m + cj]) / epsilon).exp();
        }
        worst = worst.max((sum - a[ri]).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::wasserstein_exact;

    fn m1(points: &[f64], weights: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(points.iter().map(|&x| vec![x]).collect(), weights.to_vec()).unwrap()
    }

    #[test]
    fn identity_near_zero() {
        let mu = m1(&[0.0, 1.0], &[0.5, 0.5]);
        let out =
            wasserstein_sinkhorn(&mu, &mu, &GroundCost::order_one(), 1e-3, 1e-9, 50_000).unwrap();
        assert!(out.converged);
        assert!(out.distance_estimate <= 1e-6, "{}", out.distance_estimate);
    }

    #[test]
    fn two_point_instance_close_to_exact() {
        let mu = m1(&[0.0, 1.0], &[0.5, 0.5]);
        let nu = m1(&[0.0], &[1.0]);
        let cost = GroundCost::order_one();
        let out = wasserstein_sinkhorn(&mu, &nu, &cost, 1e-4, 1e-9, 100_000).unwrap();
        assert!((out.distance_estimate - 0.5).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_epsilon() {
        let mu = m1(&[0.0], &[1.0]);
        assert!(wasserstein_sinkhorn(&mu, &mu, &GroundCost::order_one(), 0.0, 1e-6, 10).is_err());
    }

    #[test]
    fn upper_bounds_exact_on_random_instance() {
        let mut state = 7u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let pts_a: Vec<Vec<f64>> = (0..6).map(|_| vec![2.0 * next(), 2.0 * next()]).collect();
        let pts_b: Vec<Vec<f64>> = (0..5).map(|_| vec![2.0 * next(), 2.0 * next()]).collect();
        let mu = DiscreteMeasure::uniform(pts_a).unwrap();
        let nu = DiscreteMeasure::uniform(pts_b).unwrap();
        let cost = GroundCost::order_one();
        let (exact, _) = wasserstein_exact(&mu, &nu, &cost).unwrap();
        let out = wasserstein_sinkhorn(&mu, &nu, &cost, 1e-3, 1e-9, 200_000).unwrap();
        assert!(out.converged);
        assert!(out.distance_estimate >= exact - 1e-6);
        assert!((out.distance_estimate - exact) / exact.max(1e-9) < 2e-2);
    }
}
