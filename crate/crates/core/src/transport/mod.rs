//! Discrete optimal transport: exact transportation-simplex solver,
//! entropic (Sinkhorn) approximation, and the order-1 duality check.
//!
//! Measures are finitely supported probability measures on R^n with the
//! Euclidean ground metric. The order-`p` Wasserstein distance is computed
//! as the `p`-th root of the optimal value of the transportation linear
//! program with cost entries `d(x, y)^p`.

mod simplex;
mod sinkhorn;

pub use sinkhorn::{wasserstein_sinkhorn, SinkhornOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("measures have different ambient dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("weights do not sum to 1 (sum = {0})")]
    NotNormalized(f64),
    #[error("negative weight {0}")]
    NegativeWeight(f64),
    #[error("measure has empty support")]
    EmptySupport,
    #[error("point {0} has dimension {1}, expected {2}")]
    RaggedPoint(usize, usize, usize),
    #[error("ground cost exponent must satisfy p >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("duality check requires order p = 1, got {0}")]
    OrderNotOne(f64),
    #[error("transportation simplex did not terminate within {0} pivots")]
    PivotLimit(usize),
    #[error("optimal dual potentials violate feasibility by {0}")]
    DualInfeasible(f64),
}

/// A finitely supported probability measure: atoms in R^n with weights.
///
/// Weights must be nonnegative and sum to 1 within 1e-12; construction
/// rejects anything else instead of renormalizing silently.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct DiscreteMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<RawMeasure> for DiscreteMeasure {
    type Error = TransportError;
    fn try_from(raw: RawMeasure) -> Result<Self, TransportError> {
        DiscreteMeasure::new(raw.points, raw.weights)
    }
}

pub const WEIGHT_TOL: f64 = 1e-12;

impl DiscreteMeasure {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self, TransportError> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(TransportError::EmptySupport);
        }
        let dim = points[0].len();
        for (i, pt) in points.iter().enumerate() {
            if pt.len() != dim {
                return Err(TransportError::RaggedPoint(i, pt.len(), dim));
            }
        }
        let mut sum = 0.0;
        for &w in &weights {
            if w < 0.0 {
                return Err(TransportError::NegativeWeight(w));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(TransportError::NotNormalized(sum));
        }
        Ok(Self { points, weights })
    }

    /// Point mass at `point`.
    pub fn dirac(point: Vec<f64>) -> Self {
        Self {
            points: vec![point],
            weights: vec![1.0],
        }
    }

    /// Uniform measure over `points`.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self, TransportError> {
        let n = points.len();
        if n == 0 {
            return Err(TransportError::EmptySupport);
        }
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        // pin the exact sum to 1
        let excess: f64 = weights.iter().sum::<f64>() - 1.0;
        weights[n - 1] -= excess;
        Self::new(points, weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Indices of atoms carrying positive mass.
    pub(crate) fn positive_support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }
}

/// Euclidean distance between two points of equal dimension.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The ground cost `d(x, y)^p` with `d` the Euclidean norm and `p >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundCost {
    p: f64,
}

impl GroundCost {
    pub fn new(p: f64) -> Result<Self, TransportError> {
        if !(p >= 1.0) {
            return Err(TransportError::InvalidExponent(p));
        }
        Ok(Self { p })
    }

    /// Order-1 cost (plain Euclidean distance).
    pub fn order_one() -> Self {
        Self { p: 1.0 }
    }

    pub fn exponent(&self) -> f64 {
        self.p
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = euclidean(x, y);
        if self.p == 1.0 {
            d
        } else if self.p == 2.0 {
            d * d
        } else {
            d.powf(self.p)
        }
    }

    /// Converts an optimal transportation-LP value into the distance.
    pub fn distance_from_value(&self, value: f64) -> f64 {
        if value <= 0.0 {
            0.0
        } else if self.p == 1.0 {
            value
        } else {
            value.powf(1.0 / self.p)
        }
    }
}

/// A coupling of two discrete measures: an N x S matrix of nonnegative
/// masses whose row sums match the source weights and column sums match
/// the target weights.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    matrix: Vec<f64>,
    n_source: usize,
    n_target: usize,
    source: DiscreteMeasure,
    target: DiscreteMeasure,
}

impl TransportPlan {
    fn new(matrix: Vec<f64>, source: DiscreteMeasure, target: DiscreteMeasure) -> Self {
        let n_source = source.len();
        let n_target = target.len();
        debug_assert_eq!(matrix.len(), n_source * n_target);
        Self {
            matrix,
            n_source,
            n_target,
            source,
            target,
        }
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n_target + j]
    }

    pub fn source(&self) -> &DiscreteMeasure {
        &self.source
    }

    pub fn target(&self) -> &DiscreteMeasure {
        &self.target
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_source)
            .map(|i| {
                self.matrix[i * self.n_target..(i + 1) * self.n_target]
                    .iter()
                    .sum()
            })
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_target];
        for i in 0..self.n_source {
            for j in 0..self.n_target {
                sums[j] += self.matrix[i * self.n_target + j];
            }
        }
        sums
    }

    /// Largest absolute deviation of the marginals from the measures.
    pub fn marginal_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (r, w) in self.row_sums().iter().zip(self.source.weights()) {
            worst = worst.max((r - w).abs());
        }
        for (c, w) in self.col_sums().iter().zip(self.target.weights()) {
            worst = worst.max((c - w).abs());
        }
        worst
    }

    /// Unregularized transport cost of this plan under `cost`.
    pub fn transport_cost(&self, cost: &GroundCost) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n_source {
            for j in 0..self.n_target {
                let m = self.matrix[i * self.n_target + j];
                if m > 0.0 {
                    total += m * cost.eval(&self.source.points[i], &self.target.points[j]);
                }
            }
        }
        total
    }
}

fn check_dims(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(), TransportError> {
    if mu.dim() != nu.dim() {
        return Err(TransportError::DimensionMismatch(mu.dim(), nu.dim()));
    }
    Ok(())
}

/// Exact order-`p` Wasserstein distance between two discrete measures,
/// together with an optimal coupling.
///
/// Zero-weight atoms are dropped before solving; the returned plan keeps
/// the original indexing with zero rows/columns for them.
pub fn wasserstein_exact(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &GroundCost,
) -> Result<(f64, TransportPlan), TransportError> {
    check_dims(mu, nu)?;
    let rows = mu.positive_support();
    let cols = nu.positive_support();
    if rows.is_empty() || cols.is_empty() {
        return Err(TransportError::EmptySupport);
    }
    let a: Vec<f64> = rows.iter().map(|&i| mu.weights[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| nu.weights[j]).collect();
    let mut costs = vec![0.0; rows.len() * cols.len()];
    for (ri, &i) in rows.iter().enumerate() {
        for (cj, &j) in cols.iter().enumerate() {
            costs[ri * cols.len() + cj] = cost.eval(&mu.points[i], &nu.points[j]);
        }
    }
    let sol = simplex::solve_transportation(&a, &b, &costs)?;
    let mut matrix = vec![0.0; mu.len() * nu.len()];
    for (ri, &i) in rows.iter().enumerate() {
        for (cj, &j) in cols.iter().enumerate() {
            matrix[i * nu.len() + j] = sol.flow[ri * cols.len() + cj];
        }
    }
    let plan = TransportPlan::new(matrix, mu.clone(), nu.clone());
    Ok((cost.distance_from_value(sol.value), plan))
}

/// Kantorovich-Rubinstein duality check for the order-1 problem.
///
/// Solves the dual of the transportation LP (potentials with
/// `u_i + v_j <= D_ij`), verifies dual feasibility explicitly, and returns
/// the absolute gap between the cost of `plan` and the dual optimum. For an
/// exact plan the gap is at the level of floating-point roundoff; for an
/// entropic plan it reflects the regularization slack.
pub fn kr_dual_check(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    plan: &TransportPlan,
    cost: &GroundCost,
) -> Result<f64, TransportError> {
    if cost.exponent() != 1.0 {
        return Err(TransportError::OrderNotOne(cost.exponent()));
    }
    check_dims(mu, nu)?;
    let rows = mu.positive_support();
    let cols = nu.positive_support();
    if rows.is_empty() || cols.is_empty() {
        return Err(TransportError::EmptySupport);
    }
    let a: Vec<f64> = rows.iter().map(|&i| mu.weights[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| nu.weights[j]).collect();
    let mut costs = vec![0.0; rows.len() * cols.len()];
    for (ri, &i) in rows.iter().enumerate() {
        for (cj, &j) in cols.iter().enumerate() {
            costs[ri * cols.len() + cj] = cost.eval(&mu.points[i], &nu.points[j]);
        }
    }
    let sol = simplex::solve_transportation(&a, &b, &costs)?;
    // explicit feasibility certificate for the dual potentials
    let mut worst: f64 = 0.0;
    for ri in 0..rows.len() {
        for cj in 0..cols.len() {
            worst = worst.max(sol.u[ri] + sol.v[cj] - costs[ri * cols.len() + cj]);
        }
    }
    if worst > 1e-8 {
        return Err(TransportError::DualInfeasible(worst));
    }
    let dual: f64 = sol.u.iter().zip(&a).map(|(u, w)| u * w).sum::<f64>()
        + sol.v.iter().zip(&b).map(|(v, w)| v * w).sum::<f64>();
    let primal = plan.transport_cost(cost);
    Ok((primal - dual).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(points: &[f64], weights: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(
            points.iter().map(|&x| vec![x]).collect(),
            weights.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn dirac_pair_distance_one() {
        let mu = DiscreteMeasure::dirac(vec![0.0]);
        let nu = DiscreteMeasure::dirac(vec![1.0]);
        let (d, plan) = wasserstein_exact(&mu, &nu, &GroundCost::order_one()).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        assert!((plan.mass(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_is_zero() {
        let mu = m1(&[0.0, 1.0, 2.5], &[0.2, 0.5, 0.3]);
        let (d, _) = wasserstein_exact(&mu, &mu, &GroundCost::new(2.0).unwrap()).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn half_mass_move() {
        let mu = m1(&[0.0, 1.0], &[0.5, 0.5]);
        let nu = m1(&[0.0], &[1.0]);
        let (d, _) = wasserstein_exact(&mu, &nu, &GroundCost::order_one()).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(DiscreteMeasure::new(vec![vec![0.0]], vec![0.9]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0]], vec![-0.1]).is_err());
    }

    #[test]
    fn rejects_dim_mismatch() {
        let mu = DiscreteMeasure::dirac(vec![0.0]);
        let nu = DiscreteMeasure::dirac(vec![0.0, 1.0]);
        assert!(wasserstein_exact(&mu, &nu, &GroundCost::order_one()).is_err());
    }

    #[test]
    fn dual_gap_tiny_for_exact_plan() {
        let mu = m1(&[0.0, 1.0], &[0.5, 0.5]);
        let nu = m1(&[0.0], &[1.0]);
        let cost = GroundCost::order_one();
        let (_, plan) = wasserstein_exact(&mu, &nu, &cost).unwrap();
        let gap = kr_dual_check(&mu, &nu, &plan, &cost).unwrap();
        assert!(gap <= 1e-9, "gap = {gap}");
    }

    #[test]
    fn dual_check_rejects_p_not_one() {
        let mu = m1(&[0.0], &[1.0]);
        let (_, plan) = wasserstein_exact(&mu, &mu, &GroundCost::order_one()).unwrap();
        assert!(kr_dual_check(&mu, &mu, &plan, &GroundCost::new(2.0).unwrap()).is_err());
    }

    #[test]
    fn measure_json_round_trip() {
        let mu = m1(&[0.0, 2.0], &[0.25, 0.75]);
        let s = serde_json::to_string(&mu).unwrap();
        assert!(s.contains("\"points\""));
        assert!(s.contains("\"weights\""));
        let back: DiscreteMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(mu, back);
        // invalid weights are rejected at parse time
        let bad = r#"{"points":[[0.0]],"weights":[0.5]}"#;
        assert!(serde_json::from_str::<DiscreteMeasure>(bad).is_err());
    }
}
