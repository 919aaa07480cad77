//! Discrete kernels, marginal compositions, and the integrated
//! transportation distance.
//!
//! A kernel stores one target measure per source state; rows keep
//! independent target supports. The lattice builder happens to produce a
//! shared target grid, but nothing here assumes it. Sources with zero
//! marginal weight are ignored by the distance, realizing the almost-sure
//! equivalence of kernels.

use crate::exec;
use crate::transport::{
    wasserstein_exact, DiscreteMeasure, GroundCost, TransportError, WEIGHT_TOL,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("kernel has {rows} rows for {sources} source points")]
    RowCountMismatch { rows: usize, sources: usize },
    #[error("kernels do not share source points")]
    SourceMismatch,
    #[error("marginal support does not align with kernel sources")]
    MarginalMismatch,
    #[error("hierarchy ordering violated: itd={itd} joined={joined} mixed={mixed}")]
    HierarchyViolated { itd: f64, joined: f64, mixed: f64 },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// A transition kernel on a finite source set: one measure `Q(.|x)` per
/// source point `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel")]
pub struct DiscreteKernel {
    sources: Vec<Vec<f64>>,
    rows: Vec<DiscreteMeasure>,
}

#[derive(Deserialize)]
struct RawKernel {
    sources: Vec<Vec<f64>>,
    rows: Vec<DiscreteMeasure>,
}

impl TryFrom<RawKernel> for DiscreteKernel {
    type Error = KernelError;
    fn try_from(raw: RawKernel) -> Result<Self, KernelError> {
        DiscreteKernel::new(raw.sources, raw.rows)
    }
}

impl DiscreteKernel {
    pub fn new(sources: Vec<Vec<f64>>, rows: Vec<DiscreteMeasure>) -> Result<Self, KernelError> {
        if sources.len() != rows.len() || sources.is_empty() {
            return Err(KernelError::RowCountMismatch {
                rows: rows.len(),
                sources: sources.len(),
            });
        }
        Ok(Self { sources, rows })
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn sources(&self) -> &[Vec<f64>] {
        &self.sources
    }

    pub fn rows(&self) -> &[DiscreteMeasure] {
        &self.rows
    }

    pub fn row(&self, s: usize) -> &DiscreteMeasure {
        &self.rows[s]
    }

    fn same_sources(&self, other: &DiscreteKernel) -> bool {
        self.sources == other.sources
    }
}

/// A marginal distribution over the source points of a paired kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    measure: DiscreteMeasure,
}

impl Marginal {
    pub fn new(measure: DiscreteMeasure) -> Self {
        Self { measure }
    }

    /// Uniform marginal over the kernel's sources.
    pub fn uniform(kernel: &DiscreteKernel) -> Self {
        Self {
            measure: DiscreteMeasure::uniform(kernel.sources().to_vec()).expect("nonempty"),
        }
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.measure
    }

    pub fn weights(&self) -> &[f64] {
        self.measure.weights()
    }

    fn check_aligned(&self, kernel: &DiscreteKernel) -> Result<(), KernelError> {
        if self.measure.len() != kernel.len() || self.measure.points() != kernel.sources() {
            return Err(KernelError::MarginalMismatch);
        }
        Ok(())
    }
}

// Exact-equality atom key. Lattice points are constructed, not measured, so
// merging uses bit-exact coordinates with no epsilon-snapping.
fn atom_key(point: &[f64]) -> Vec<u64> {
    point.iter().map(|x| x.to_bits()).collect()
}

/// The mixture distribution: the marginal of the next state when the current
/// state follows `lambda`. Coincident target atoms are merged exactly.
pub fn compose_marginal(
    lambda: &Marginal,
    kernel: &DiscreteKernel,
) -> Result<DiscreteMeasure, KernelError> {
    lambda.check_aligned(kernel)?;
    let mut order: Vec<Vec<f64>> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut weights: Vec<f64> = Vec::new();
    for (s, row) in kernel.rows().iter().enumerate() {
        let lw = lambda.weights()[s];
        if lw == 0.0 {
            continue;
        }
        for (pt, &w) in row.points().iter().zip(row.weights()) {
            let key = atom_key(pt);
            let idx = *index.entry(key).or_insert_with(|| {
                order.push(pt.clone());
                weights.push(0.0);
                order.len() - 1
            });
            weights[idx] += lw * w;
        }
    }
    // mass conservation up to the construction tolerance
    let total: f64 = weights.iter().sum();
    debug_assert!((total - 1.0).abs() <= 1e-9);
    let correction = total - 1.0;
    if correction.abs() > 0.0 && correction.abs() <= 16.0 * WEIGHT_TOL {
        let last = weights.len() - 1;
        weights[last] -= correction;
    }
    Ok(DiscreteMeasure::new(order, weights)?)
}

/// The joined measure on the product space: atoms `(x, y)` with weights
/// `lambda(x) * Q(y|x)`.
pub fn join_marginal(
    lambda: &Marginal,
    kernel: &DiscreteKernel,
) -> Result<DiscreteMeasure, KernelError> {
    lambda.check_aligned(kernel)?;
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (s, row) in kernel.rows().iter().enumerate() {
        let lw = lambda.weights()[s];
        if lw == 0.0 {
            continue;
        }
        let x = &kernel.sources()[s];
        for (pt, &w) in row.points().iter().zip(row.weights()) {
            let mut joint = x.clone();
            joint.extend_from_slice(pt);
            points.push(joint);
            weights.push(lw * w);
        }
    }
    let total: f64 = weights.iter().sum();
    let correction = total - 1.0;
    if correction.abs() > 0.0 && correction.abs() <= 16.0 * WEIGHT_TOL {
        let last = weights.len() - 1;
        weights[last] -= correction;
    }
    Ok(DiscreteMeasure::new(points, weights)?)
}

fn per_source_distances(
    lambda: &Marginal,
    q: &DiscreteKernel,
    q_tilde: &DiscreteKernel,
    cost: &GroundCost,
) -> Result<Vec<f64>, KernelError> {
    if !q.same_sources(q_tilde) {
        return Err(KernelError::SourceMismatch);
    }
    lambda.check_aligned(q)?;
    let results = exec::map_indexed(q.len(), |s| {
        if lambda.weights()[s] == 0.0 {
            return Ok(0.0);
        }
        wasserstein_exact(q.row(s), q_tilde.row(s), cost).map(|(d, _)| d)
    });
    results.into_iter().collect::<Result<Vec<f64>, _>>().map_err(Into::into)
}

/// The integrated transportation distance of degree `p`:
/// the `lambda`-weighted L_p aggregation of per-source Wasserstein
/// distances. Per-source transports run in parallel; the reduction is over
/// a per-source array summed in index order, so it is deterministic.
pub fn itd(
    lambda: &Marginal,
    q: &DiscreteKernel,
    q_tilde: &DiscreteKernel,
    cost: &GroundCost,
) -> Result<f64, KernelError> {
    let dists = per_source_distances(lambda, q, q_tilde, cost)?;
    let p = cost.exponent();
    let total: f64 = dists
        .iter()
        .zip(lambda.weights())
        .map(|(d, w)| w * d.powf(p))
        .sum();
    Ok(cost.distance_from_value(total))
}

/// Supremum baseline: the largest per-source Wasserstein distance.
pub fn sup_distance(
    q: &DiscreteKernel,
    q_tilde: &DiscreteKernel,
    cost: &GroundCost,
) -> Result<f64, KernelError> {
    let lambda = Marginal::uniform(q);
    let dists = per_source_distances(&lambda, q, q_tilde, cost)?;
    Ok(dists.into_iter().fold(0.0, f64::max))
}

/// Computes the full ordering chain: the kernel distance, the distance of
/// the joined product-space measures, and the distance of the mixtures.
/// The ordering `itd >= joined >= mixed` is asserted before returning.
pub fn hierarchy_triple(
    lambda: &Marginal,
    q: &DiscreteKernel,
    q_tilde: &DiscreteKernel,
    cost: &GroundCost,
) -> Result<(f64, f64, f64), KernelError> {
    let itd_val = itd(lambda, q, q_tilde, cost)?;
    let joined_q = join_marginal(lambda, q)?;
    let joined_qt = join_marginal(lambda, q_tilde)?;
    let (joined, _) = wasserstein_exact(&joined_q, &joined_qt, cost)?;
    let mixed_q = compose_marginal(lambda, q)?;
    let mixed_qt = compose_marginal(lambda, q_tilde)?;
    let (mixed, _) = wasserstein_exact(&mixed_q, &mixed_qt, cost)?;
    if itd_val + 1e-9 < joined || joined + 1e-9 < mixed {
        return Err(KernelError::HierarchyViolated {
            itd: itd_val,
            joined,
            mixed,
        });
    }
    Ok((itd_val, joined, mixed))
}

/// The paper-style strictness instance: two sources `{0, eps}`, targets
/// `{0, 1}`, rows `delta_{sign(x)}` vs `delta_{1-sign(x)}`, uniform
/// marginal. Useful in tests; exposed because the experiments reuse it.
pub fn strictness_example(eps: f64) -> (Marginal, DiscreteKernel, DiscreteKernel) {
    let sources = vec![vec![0.0], vec![eps]];
    let q = DiscreteKernel::new(
        sources.clone(),
        vec![
            DiscreteMeasure::dirac(vec![0.0]),
            DiscreteMeasure::dirac(vec![1.0]),
        ],
    )
    .unwrap();
    let q_tilde = DiscreteKernel::new(
        sources.clone(),
        vec![
            DiscreteMeasure::dirac(vec![1.0]),
            DiscreteMeasure::dirac(vec![0.0]),
        ],
    )
    .unwrap();
    let lambda = Marginal::new(
        DiscreteMeasure::new(sources, vec![0.5, 0.5]).unwrap(),
    );
    (lambda, q, q_tilde)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compose_point_mass_marginal_returns_row() {
        let q = DiscreteKernel::new(
            vec![vec![0.0], vec![1.0]],
            vec![
                DiscreteMeasure::new(vec![vec![2.0], vec![3.0]], vec![0.25, 0.75]).unwrap(),
                DiscreteMeasure::dirac(vec![9.0]),
            ],
        )
        .unwrap();
        let lambda = Marginal::new(
            DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![1.0, 0.0]).unwrap(),
        );
        let mix = compose_marginal(&lambda, &q).unwrap();
        assert_eq!(mix, *q.row(0));
    }

    #[test]
    fn compose_two_diracs() {
        let q = DiscreteKernel::new(
            vec![vec![0.0], vec![1.0]],
            vec![
                DiscreteMeasure::dirac(vec![0.0]),
                DiscreteMeasure::dirac(vec![1.0]),
            ],
        )
        .unwrap();
        let lambda = Marginal::uniform(&q);
        let mix = compose_marginal(&lambda, &q).unwrap();
        assert_eq!(mix.points(), &[vec![0.0], vec![1.0]]);
        assert_eq!(mix.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn counterexample_mixtures_coincide() {
        let (lambda, q, q_tilde) = strictness_example(0.5);
        let a = compose_marginal(&lambda, &q).unwrap();
        let b = compose_marginal(&lambda, &q_tilde).unwrap();
        let cost = GroundCost::order_one();
        let (d, _) = wasserstein_exact(&a, &b, &cost).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn join_uniform_rows_four_atoms() {
        let q = DiscreteKernel::new(
            vec![vec![0.0], vec![1.0]],
            vec![
                DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0]]).unwrap(),
                DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0]]).unwrap(),
            ],
        )
        .unwrap();
        let lambda = Marginal::uniform(&q);
        let joined = join_marginal(&lambda, &q).unwrap();
        assert_eq!(joined.len(), 4);
        assert!(joined.weights().iter().all(|w| (w - 0.25).abs() < 1e-12));
        assert_eq!(joined.dim(), 2);
    }

    #[test]
    fn itd_identity_zero() {
        let (lambda, q, _) = strictness_example(0.3);
        let d = itd(&lambda, &q, &q, &GroundCost::order_one()).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn counterexample_itd_is_one() {
        for p in [1.0, 2.0, 3.0] {
            let (lambda, q, q_tilde) = strictness_example(0.5);
            let d = itd(&lambda, &q, &q_tilde, &GroundCost::new(p).unwrap()).unwrap();
            assert!((d - 1.0).abs() < 1e-12, "p={p} d={d}");
        }
    }

    #[test]
    fn counterexample_hierarchy_values() {
        for eps in [0.1, 0.5, 0.9] {
            let (lambda, q, q_tilde) = strictness_example(eps);
            let (itd_v, joined, mixed) =
                hierarchy_triple(&lambda, &q, &q_tilde, &GroundCost::order_one()).unwrap();
            assert!((itd_v - 1.0).abs() < 1e-12);
            assert!((joined - eps).abs() < 1e-9, "eps={eps} joined={joined}");
            assert!(mixed.abs() < 1e-12);
        }
    }

    #[test]
    fn sup_distance_counterexample() {
        let (_, q, q_tilde) = strictness_example(0.5);
        let d = sup_distance(&q, &q_tilde, &GroundCost::order_one()).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn source_mismatch_rejected() {
        let (lambda, q, _) = strictness_example(0.5);
        let (_, other, _) = strictness_example(0.25);
        assert!(itd(&lambda, &q, &other, &GroundCost::order_one()).is_err());
    }

    #[test]
    fn kernel_json_round_trip() {
        let (_, q, _) = strictness_example(0.5);
        let s = serde_json::to_string(&q).unwrap();
        assert!(s.contains("\"sources\""));
        assert!(s.contains("\"rows\""));
        let back: DiscreteKernel = serde_json::from_str(&s).unwrap();
        assert_eq!(q, back);
    }
}
