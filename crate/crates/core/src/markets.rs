//! Multi-asset geometric Brownian motion under the risk-neutral measure,
//! basket put payoffs, and the n-dimensional recombining binomial lattice
//! baseline pricer.

use crate::exec;
use crate::lattice::KernelSampler;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("initial price {0} must be positive")]
    BadInitialPrice(f64),
    #[error("volatility matrix must be {n}x{n}, row {row} has {got} entries")]
    BadSigmaShape { n: usize, row: usize, got: usize },
    #[error("maturity must be positive, got {0}")]
    BadMaturity(f64),
    #[error("step count must be at least 1")]
    BadSteps,
    #[error("strike must be positive, got {0}")]
    BadStrike(f64),
    #[error("basket weights must be nonnegative and sum to 1 (sum = {0})")]
    BadWeights(f64),
    #[error("state has dimension {got}, model is {expected}-dimensional")]
    DimMismatch { got: usize, expected: usize },
    #[error("binomial lattice would need {nodes} node evaluations, above the cap {cap}")]
    NodeCapExceeded { nodes: u64, cap: u64 },
}

/// Correlated geometric Brownian motion: asset `i` is driven by the `i`-th
/// row of the volatility matrix applied to a shared standard Brownian
/// vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GbmModel {
    pub s0: Vec<f64>,
    pub r: f64,
    pub sigma: Vec<Vec<f64>>,
    pub maturity: f64,
    pub steps: usize,
}

impl GbmModel {
    pub fn new(
        s0: Vec<f64>,
        r: f64,
        sigma: Vec<Vec<f64>>,
        maturity: f64,
        steps: usize,
    ) -> Result<Self, MarketError> {
        let n = s0.len();
        for &p in &s0 {
            if !(p > 0.0) {
                return Err(MarketError::BadInitialPrice(p));
            }
        }
        if sigma.len() != n {
            return Err(MarketError::BadSigmaShape { n, row: usize::MAX, got: sigma.len() });
        }
        for (row, sr) in sigma.iter().enumerate() {
            if sr.len() != n {
                return Err(MarketError::BadSigmaShape { n, row, got: sr.len() });
            }
        }
        if !(maturity > 0.0) {
            return Err(MarketError::BadMaturity(maturity));
        }
        if steps == 0 {
            return Err(MarketError::BadSteps);
        }
        Ok(Self { s0, r, sigma, maturity, steps })
    }

    pub fn dim(&self) -> usize {
        self.s0.len()
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.steps as f64
    }

    fn row_norm_sq(&self, i: usize) -> f64 {
        self.sigma[i].iter().map(|x| x * x).sum()
    }

    /// One exact lognormal step of length `dt` from `state`:
    /// `S'_i = S_i exp((r - ||σ_i||²/2) dt + σ_i · Z √dt)`.
    pub fn sample_step(
        &self,
        state: &[f64],
        dt: f64,
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<f64>, MarketError> {
        let n = self.dim();
        if state.len() != n {
            return Err(MarketError::DimMismatch { got: state.len(), expected: n });
        }
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let sqrt_dt = dt.sqrt();
        Ok((0..n)
            .map(|i| {
                let drift = (self.r - 0.5 * self.row_norm_sq(i)) * dt;
                let shock: f64 = self.sigma[i].iter().zip(&z).map(|(s, zi)| s * zi).sum();
                state[i] * (drift + shock * sqrt_dt).exp()
            })
            .collect())
    }
}

/// Put on the weighted basket: payoff `max(0, K - w · s)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasketPut {
    pub strike: f64,
    pub weights: Vec<f64>,
}

impl BasketPut {
    pub fn new(strike: f64, weights: Vec<f64>) -> Result<Self, MarketError> {
        if !(strike > 0.0) {
            return Err(MarketError::BadStrike(strike));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(MarketError::BadWeights(sum));
        }
        Ok(Self { strike, weights })
    }

    pub fn payoff(&self, s: &[f64]) -> f64 {
        let basket: f64 = self.weights.iter().zip(s).map(|(w, x)| w * x).sum();
        (self.strike - basket).max(0.0)
    }
}

/// Combined market + option configuration, matching the bundled JSON files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarketConfig {
    pub s0: Vec<f64>,
    pub r: f64,
    pub sigma: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    pub maturity: f64,
    #[serde(rename = "N")]
    pub steps: usize,
    pub strike: f64,
    pub weights: Vec<f64>,
}

impl MarketConfig {
    pub fn model(&self) -> Result<GbmModel, MarketError> {
        GbmModel::new(
            self.s0.clone(),
            self.r,
            self.sigma.clone(),
            self.maturity,
            self.steps,
        )
    }

    pub fn option(&self) -> Result<BasketPut, MarketError> {
        BasketPut::new(self.strike, self.weights.clone())
    }
}

/// Total node count of the recombining lattice over steps 0..N:
/// `Σ_{i=0}^{N} (i+1)^n`.
pub fn binomial_node_count(n: u32, steps: u32) -> u64 {
    (0..=steps as u64).map(|i| (i + 1).pow(n)).sum()
}

const NODE_CAP: u64 = 200_000_000;

fn node_prices(model: &GbmModel, step: usize) -> Vec<Vec<f64>> {
    // node (j_1..j_n): asset k at s0_k exp((r - ||σ_k||²/2) i dt
    //                                  + Σ_d σ_{k,d} (2 j_d - i) √dt)
    let n = model.dim();
    let dt = model.dt();
    let sqrt_dt = dt.sqrt();
    let radix = step + 1;
    let count = radix.pow(n as u32);
    exec::map_indexed(count, |id| {
        let mut rem = id;
        let mut walk = vec![0.0f64; n];
        for w in walk.iter_mut() {
            let j = rem % radix;
            rem /= radix;
            *w = (2.0 * j as f64 - step as f64) * sqrt_dt;
        }
        (0..n)
            .map(|k| {
                let drift = (model.r - 0.5 * model.row_norm_sq(k)) * step as f64 * dt;
                let shock: f64 = model.sigma[k].iter().zip(&walk).map(|(s, w)| s * w).sum();
                model.s0[k] * (drift + shock).exp()
            })
            .collect()
    })
}

fn binomial_backward(
    model: &GbmModel,
    opt: &BasketPut,
    american: bool,
) -> Result<f64, MarketError> {
    let n = model.dim() as u32;
    let steps = model.steps as u32;
    let work = binomial_node_count(n, steps).saturating_mul(1 << n);
    if work > NODE_CAP {
        return Err(MarketError::NodeCapExceeded { nodes: work, cap: NODE_CAP });
    }
    let n = model.dim();
    let discount = (-model.r * model.dt()).exp();
    let branch_prob = 1.0 / (1u64 << n) as f64;

    let mut values: Vec<f64> = node_prices(model, model.steps)
        .iter()
        .map(|s| opt.payoff(s))
        .collect();
    for step in (0..model.steps).rev() {
        let radix = step + 1;
        let child_radix = step + 2;
        let prices = node_prices(model, step);
        let count = radix.pow(n as u32);
        values = exec::map_indexed(count, |id| {
            // decompose id, then average the 2^n children (up-count +0/+1
            // per coordinate) in the child mixed radix
            let mut digits = vec![0usize; n];
            let mut rem = id;
            for d in digits.iter_mut() {
                *d = rem % radix;
                rem /= radix;
            }
            let mut continuation = 0.0;
            for branch in 0..(1usize << n) {
                let mut child = 0usize;
                let mut mult = 1usize;
                for (d, &j) in digits.iter().enumerate() {
                    let up = (branch >> d) & 1;
                    child += (j + up) * mult;
                    mult *= child_radix;
                }
                continuation += values[child];
            }
            continuation *= branch_prob * discount;
            if american {
                continuation.max(opt.payoff(&prices[id]))
            } else {
                continuation
            }
        });
    }
    Ok(values[0])
}

/// American basket-put price on the recombining ±√dt lattice with
/// equiprobable 2^n branches and backward `max(exercise, discounted mean)`.
pub fn binomial_price_american(model: &GbmModel, opt: &BasketPut) -> Result<f64, MarketError> {
    binomial_backward(model, opt, true)
}

/// European counterpart on the same lattice (no early exercise).
pub fn binomial_price_european(model: &GbmModel, opt: &BasketPut) -> Result<f64, MarketError> {
    binomial_backward(model, opt, false)
}

/// Adapter exposing one-step GBM transitions as a particle sampler for the
/// lattice builder.
pub struct GbmStepSampler {
    model: GbmModel,
    dt: f64,
}

impl GbmStepSampler {
    pub fn new(model: GbmModel) -> Self {
        let dt = model.dt();
        Self { model, dt }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

impl KernelSampler for GbmStepSampler {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn sample(&self, state: &[f64], count: usize, rng: &mut ChaCha12Rng) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                self.model
                    .sample_step(state, self.dt, rng)
                    .expect("state dimension fixed by the lattice")
            })
            .collect()
    }
}

/// The two-asset configuration used throughout the pricing experiments.
pub fn market_config_2d(steps: usize) -> MarketConfig {
    MarketConfig {
        s0: vec![10.0, 10.0],
        r: 0.03,
        sigma: vec![vec![0.5, -0.2], vec![-0.2, 0.5]],
        maturity: 1.0,
        steps,
        strike: 10.0,
        weights: vec![0.5, 0.5],
    }
}

/// The five-asset configuration.
pub fn market_config_5d(steps: usize) -> MarketConfig {
    MarketConfig {
        s0: vec![10.0; 5],
        r: 0.03,
        sigma: vec![
            vec![0.5, 0.2, 0.3, -0.2, 0.15],
            vec![0.2, 0.5, -0.15, 0.3, 0.12],
            vec![0.3, -0.15, 0.75, -0.1, 0.1],
            vec![-0.2, 0.03, -0.1, 0.3, 0.05],
            vec![0.15, 0.12, 0.1, 0.05, 0.4],
        ],
        maturity: 1.0,
        steps,
        strike: 10.0,
        weights: vec![0.2; 5],
    }
}
