//! Transition risk mappings and backward value evaluation over a lattice,
//! with the a-priori error bounds driven by per-stage kernel distances.

use crate::exec;
use crate::lattice::LatticeStage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("measure has {weights} weights for {values} values")]
    SupportMismatch { weights: usize, values: usize },
    #[error("empty support")]
    EmptySupport,
    #[error("alpha must lie in (0, 1], got {0}")]
    BadAlpha(f64),
    #[error("kappa must lie in [0, 1], got {0}")]
    BadKappa(f64),
    #[error("semideviation order must satisfy p >= 1, got {0}")]
    BadOrder(f64),
    #[error("spectral weights sum to {0}, expected 1")]
    ThetaNotNormalized(f64),
    #[error("stopping mapping needs a reward function")]
    MissingReward,
    #[error("lattice chain broken between stages {0} and {1}")]
    BrokenChain(usize, usize),
    #[error("discount must lie in (0, 1], got {0}")]
    BadDiscount(f64),
    #[error("ledger needs {expected} entries for {field}, got {got}")]
    LedgerShape { field: &'static str, expected: usize, got: usize },
    #[error("ledger entry {field}[{index}] is negative")]
    LedgerNegative { field: &'static str, index: usize },
}

fn check_support(weights: &[f64], values: &[f64]) -> Result<(), RiskError> {
    if weights.is_empty() {
        return Err(RiskError::EmptySupport);
    }
    if weights.len() != values.len() {
        return Err(RiskError::SupportMismatch {
            weights: weights.len(),
            values: values.len(),
        });
    }
    Ok(())
}

/// Plain conditional expectation: `Σ μ(y) v(y)`.
pub fn sigma_expectation(weights: &[f64], values: &[f64]) -> Result<f64, RiskError> {
    check_support(weights, values)?;
    Ok(weights.iter().zip(values).map(|(w, v)| w * v).sum())
}

/// Optimal-stopping mapping: `max(reward, Σ μ v)`.
pub fn sigma_stopping(reward: f64, weights: &[f64], values: &[f64]) -> Result<f64, RiskError> {
    Ok(sigma_expectation(weights, values)?.max(reward))
}

/// Average value at risk of level `alpha`: the mean of the worst (largest)
/// `alpha` fraction of outcomes. For a discrete distribution the minimizing
/// threshold is attained at an atom, so the closed form sorts the atoms and
/// averages the top `alpha` mass.
pub fn sigma_avar(weights: &[f64], values: &[f64], alpha: f64) -> Result<f64, RiskError> {
    check_support(weights, values)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(RiskError::BadAlpha(alpha));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    let mut remaining = alpha;
    let mut acc = 0.0;
    for &i in &order {
        if remaining <= 0.0 {
            break;
        }
        let take = weights[i].min(remaining);
        acc += take * values[i];
        remaining -= take;
    }
    Ok(acc / alpha)
}

/// Mean–upper-semideviation mapping:
/// `mean + kappa * (Σ μ [v − mean]_+^p)^(1/p)`.
pub fn sigma_msd(weights: &[f64], values: &[f64], p: f64, kappa: f64) -> Result<f64, RiskError> {
    check_support(weights, values)?;
    if !(0.0..=1.0).contains(&kappa) {
        return Err(RiskError::BadKappa(kappa));
    }
    if !(p >= 1.0) {
        return Err(RiskError::BadOrder(p));
    }
    let mean = sigma_expectation(weights, values)?;
    let moment: f64 = weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * (v - mean).max(0.0).powf(p))
        .sum();
    Ok(mean + kappa * moment.powf(1.0 / p))
}

/// Finite spectral mixture: `Σ_j θ_j AVaR_{α_j}` with θ a probability
/// vector on levels in (0, 1].
pub fn sigma_spectral(
    weights: &[f64],
    values: &[f64],
    theta: &[(f64, f64)],
) -> Result<f64, RiskError> {
    check_support(weights, values)?;
    if theta.is_empty() {
        return Err(RiskError::EmptySupport);
    }
    let mass: f64 = theta.iter().map(|&(_, w)| w).sum();
    if (mass - 1.0).abs() > 1e-12 {
        return Err(RiskError::ThetaNotNormalized(mass));
    }
    let mut acc = 0.0;
    for &(alpha, w) in theta {
        acc += w * sigma_avar(weights, values, alpha)?;
    }
    Ok(acc)
}

/// A transition risk mapping, configurable from JSON as
/// `{"mapping": "avar", "alpha": 0.5}` and the like.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mapping", rename_all = "snake_case")]
pub enum RiskMapping {
    Expectation,
    Stopping,
    Avar { alpha: f64 },
    Msd { p: f64, kappa: f64 },
    Spectral { theta: Vec<(f64, f64)> },
}

impl RiskMapping {
    /// Validates the parameters without evaluating.
    pub fn validate(&self) -> Result<(), RiskError> {
        match self {
            RiskMapping::Expectation | RiskMapping::Stopping => Ok(()),
            RiskMapping::Avar { alpha } => {
                if *alpha > 0.0 && *alpha <= 1.0 {
                    Ok(())
                } else {
                    Err(RiskError::BadAlpha(*alpha))
                }
            }
            RiskMapping::Msd { p, kappa } => {
                if !(*p >= 1.0) {
                    Err(RiskError::BadOrder(*p))
                } else if !(0.0..=1.0).contains(kappa) {
                    Err(RiskError::BadKappa(*kappa))
                } else {
                    Ok(())
                }
            }
            RiskMapping::Spectral { theta } => {
                let mass: f64 = theta.iter().map(|&(_, w)| w).sum();
                if theta.is_empty() || (mass - 1.0).abs() > 1e-12 {
                    return Err(RiskError::ThetaNotNormalized(mass));
                }
                for &(alpha, _) in theta {
                    if !(alpha > 0.0 && alpha <= 1.0) {
                        return Err(RiskError::BadAlpha(alpha));
                    }
                }
                Ok(())
            }
        }
    }

    /// Evaluates the mapping on a discrete next-state distribution.
    /// `reward` is consumed by the stopping mapping only.
    pub fn evaluate(
        &self,
        weights: &[f64],
        values: &[f64],
        reward: Option<f64>,
    ) -> Result<f64, RiskError> {
        match self {
            RiskMapping::Expectation => sigma_expectation(weights, values),
            RiskMapping::Stopping => {
                let r = reward.ok_or(RiskError::MissingReward)?;
                sigma_stopping(r, weights, values)
            }
            RiskMapping::Avar { alpha } => sigma_avar(weights, values, *alpha),
            RiskMapping::Msd { p, kappa } => sigma_msd(weights, values, *p, *kappa),
            RiskMapping::Spectral { theta } => sigma_spectral(weights, values, theta),
        }
    }

    /// Lipschitz constant of the mapping with respect to the measure
    /// argument (order-1 transport distance), for a value function with
    /// Lipschitz constant `v_lip`.
    pub fn measure_lipschitz(&self, v_lip: f64) -> f64 {
        match self {
            RiskMapping::Expectation | RiskMapping::Stopping => v_lip,
            RiskMapping::Avar { alpha } => v_lip / alpha,
            RiskMapping::Msd { kappa, .. } => 2.0 * (1.0 + kappa) * v_lip,
            RiskMapping::Spectral { theta } => theta
                .iter()
                .map(|&(alpha, w)| w * v_lip / alpha)
                .sum(),
        }
    }

    /// Lipschitz constant with respect to the value argument in the sup
    /// norm. Monotone translation-equivariant mappings are 1-Lipschitz;
    /// the semideviation term adds 2κ.
    pub fn value_lipschitz(&self) -> f64 {
        match self {
            RiskMapping::Msd { kappa, .. } => 1.0 + 2.0 * kappa,
            _ => 1.0,
        }
    }
}

type StateFn = dyn Fn(usize, &[f64]) -> f64 + Sync;

/// Stage costs for the backward recursion: a terminal cost, per-stage
/// running costs, and optional stopping rewards.
pub struct CostSpec {
    pub terminal: Box<dyn Fn(&[f64]) -> f64 + Sync>,
    pub running: Box<StateFn>,
    pub reward: Option<Box<StateFn>>,
}

impl CostSpec {
    /// Terminal cost only; running costs are zero.
    pub fn terminal_only(terminal: impl Fn(&[f64]) -> f64 + Sync + 'static) -> Self {
        Self {
            terminal: Box::new(terminal),
            running: Box::new(|_, _| 0.0),
            reward: None,
        }
    }

    /// Optimal-stopping spec: the payoff acts as both terminal cost and
    /// per-stage reward.
    pub fn stopping(payoff: impl Fn(&[f64]) -> f64 + Sync + Clone + 'static) -> Self {
        let p2 = payoff.clone();
        Self {
            terminal: Box::new(payoff),
            running: Box::new(|_, _| 0.0),
            reward: Some(Box::new(move |_, x| p2(x))),
        }
    }
}

/// Values per stage, aligned with each stage's points.
#[derive(Clone, Debug)]
pub struct ValueFunction {
    pub stages: Vec<Vec<f64>>,
}

impl ValueFunction {
    pub fn initial(&self) -> f64 {
        self.stages[0][0]
    }
}

/// Backward risk evaluation: `v_T = c_T`,
/// `v_t(z) = c_t(z) + σ(z, Q̃_t(·|z), discount · v_{t+1})`.
/// Discounting is applied to the value argument before the mapping.
pub fn backward_evaluate(
    stages: &[LatticeStage],
    costs: &CostSpec,
    mapping: &RiskMapping,
    discount: f64,
) -> Result<ValueFunction, RiskError> {
    if !(discount > 0.0 && discount <= 1.0) {
        return Err(RiskError::BadDiscount(discount));
    }
    mapping.validate()?;
    let t_max = stages.len() - 1;
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); stages.len()];
    values[t_max] = stages[t_max]
        .points
        .iter()
        .map(|z| (costs.terminal)(z))
        .collect();
    for t in (0..t_max).rev() {
        let kernel = stages[t + 1]
            .kernel_from_prev
            .as_ref()
            .ok_or(RiskError::BrokenChain(t, t + 1))?;
        if kernel.len() != stages[t].points.len()
            || kernel.row(0).len() != stages[t + 1].points.len()
        {
            return Err(RiskError::BrokenChain(t, t + 1));
        }
        let discounted: Vec<f64> = values[t + 1].iter().map(|v| discount * v).collect();
        let next: Result<Vec<f64>, RiskError> =
            exec::map_indexed(stages[t].points.len(), |s| {
                let z = &stages[t].points[s];
                let reward = costs.reward.as_ref().map(|r| r(t, z));
                let sigma = mapping.evaluate(kernel.row(s).weights(), &discounted, reward)?;
                Ok((costs.running)(t, z) + sigma)
            })
            .into_iter()
            .collect();
        values[t] = next?;
    }
    Ok(ValueFunction { stages: values })
}

/// Per-stage Lipschitz constants and kernel distances feeding the a-priori
/// error bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LipschitzLedger {
    /// L_t: mapping-vs-measure constants, t = 0..T-1.
    pub l: Vec<f64>,
    /// K_t: mapping-vs-value constants, t = 0..T-1.
    pub k: Vec<f64>,
    /// Δ_t: per-stage kernel distances, t = 0..T-1.
    pub delta: Vec<f64>,
    /// L_{Q_t}: kernel transport-Lipschitz constants, t = 0..T-1; needed
    /// only for the marginal bounds.
    pub l_q: Option<Vec<f64>>,
}

impl LipschitzLedger {
    fn check(&self) -> Result<(), RiskError> {
        let t = self.delta.len();
        for (field, v) in [("l", &self.l), ("k", &self.k)] {
            if v.len() != t {
                return Err(RiskError::LedgerShape { field, expected: t, got: v.len() });
            }
        }
        if let Some(lq) = &self.l_q {
            if lq.len() != t {
                return Err(RiskError::LedgerShape { field: "l_q", expected: t, got: lq.len() });
            }
        }
        for (field, v) in [("l", &self.l), ("k", &self.k), ("delta", &self.delta)] {
            if let Some(i) = v.iter().position(|x| *x < 0.0) {
                return Err(RiskError::LedgerNegative { field, index: i });
            }
        }
        Ok(())
    }

    /// Bound on the initial-value error:
    /// `Σ_{τ=0}^{T-1} L_τ (Π_{j=0}^{τ-1} K_j) Δ_τ`.
    pub fn value_error_bound(&self) -> Result<f64, RiskError> {
        self.check()?;
        let mut total = 0.0;
        let mut k_prod = 1.0;
        for tau in 0..self.delta.len() {
            total += self.l[tau] * k_prod * self.delta[tau];
            k_prod *= self.k[tau];
        }
        Ok(total)
    }

    /// Bounds on the marginal transport error at each time t = 0..T:
    /// `Σ_{τ=1}^{t-1} Δ_τ Π_{i=τ+1}^{t-1} L_{Q_i}`.
    pub fn marginal_error_bounds(&self) -> Result<Vec<f64>, RiskError> {
        self.check()?;
        let lq = self
            .l_q
            .as_ref()
            .ok_or(RiskError::LedgerShape { field: "l_q", expected: self.delta.len(), got: 0 })?;
        let t_max = self.delta.len();
        let mut bounds = Vec::with_capacity(t_max + 1);
        for t in 0..=t_max {
            let mut total = 0.0;
            for tau in 1..t {
                let mut prod = 1.0;
                for lqi in &lq[tau + 1..t] {
                    prod *= lqi;
                }
                total += self.delta[tau] * prod;
            }
            bounds.push(total);
        }
        Ok(bounds)
    }
}
