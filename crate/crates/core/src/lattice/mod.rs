//! Forward construction of the approximate chain: per-source particle
//! sampling, representative-site selection, implied kernels, marginal
//! updates, and per-stage kernel-distance errors.

mod select;

pub use select::{select_exact_mip, select_greedy, select_lp_round};

use crate::exec;
use crate::kernel_metric::{DiscreteKernel, KernelError, Marginal};
use crate::smalllp::LpError;
use crate::transport::{euclidean, DiscreteMeasure, GroundCost, TransportError};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("site list is empty")]
    EmptySites,
    #[error("budget {budget} invalid for {candidates} candidates")]
    BadBudget { budget: usize, candidates: usize },
    #[error("dimension mismatch: particles are {particles}-d, sites {sites}-d")]
    DimensionMismatch { particles: usize, sites: usize },
    #[error("cloud has {clouds} sources for {weights} source weights")]
    SourceCountMismatch { clouds: usize, weights: usize },
    #[error("source {0} has no particles")]
    EmptySource(usize),
    #[error("instance has {beta_vars} assignment variables, above the exact-solver cap {cap}")]
    InstanceTooLarge { beta_vars: usize, cap: usize },
    #[error("rounding produced no usable site set after {0} retries")]
    RoundingFailed(usize),
    #[error("moment order u={u} must exceed the transport order p={p}")]
    InvalidMomentOrder { u: f64, p: f64 },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Per-source particle samples drawn from the transition kernel, together
/// with the current marginal weight of each source.
#[derive(Clone, Debug)]
pub struct ParticleCloud {
    particles: Vec<Vec<Vec<f64>>>,
    source_weights: Vec<f64>,
}

impl ParticleCloud {
    pub fn new(
        particles: Vec<Vec<Vec<f64>>>,
        source_weights: Vec<f64>,
    ) -> Result<Self, LatticeError> {
        if particles.len() != source_weights.len() {
            return Err(LatticeError::SourceCountMismatch {
                clouds: particles.len(),
                weights: source_weights.len(),
            });
        }
        for (s, (group, &w)) in particles.iter().zip(&source_weights).enumerate() {
            if group.is_empty() && w != 0.0 {
                return Err(LatticeError::EmptySource(s));
            }
        }
        Ok(Self { particles, source_weights })
    }

    /// Single-source cloud with unit weight.
    pub fn single(particles: Vec<Vec<f64>>) -> Result<Self, LatticeError> {
        Self::new(vec![particles], vec![1.0])
    }

    pub fn sources(&self) -> usize {
        self.particles.len()
    }

    pub fn particles(&self, s: usize) -> &[Vec<f64>] {
        &self.particles[s]
    }

    pub fn source_weights(&self) -> &[f64] {
        &self.source_weights
    }

    pub fn total_particles(&self) -> usize {
        self.particles.iter().map(|g| g.len()).sum()
    }

    pub fn dim(&self) -> Option<usize> {
        self.particles.iter().flat_map(|g| g.iter()).next().map(|p| p.len())
    }

    /// Iterator over all particles of positive-weight sources.
    pub fn pooled(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.particles
            .iter()
            .zip(&self.source_weights)
            .filter(|(_, &w)| w > 0.0)
            .flat_map(|(g, _)| g.iter())
    }
}

/// Candidate site locations for the next-stage representative states.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    sites: Vec<Vec<f64>>,
}

impl CandidateSet {
    pub fn new(sites: Vec<Vec<f64>>) -> Result<Self, LatticeError> {
        if sites.is_empty() {
            return Err(LatticeError::EmptySites);
        }
        Ok(Self { sites })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Vec<f64>] {
        &self.sites
    }
}

/// The site-selection instance: choose at most `budget` candidate sites and
/// assign every particle to a selected site, minimizing the source-weighted
/// mean `p`-th-power distance.
#[derive(Clone, Debug)]
pub struct SelectionProblem {
    pub cloud: ParticleCloud,
    pub candidates: CandidateSet,
    pub budget: usize,
    pub cost: GroundCost,
}

impl SelectionProblem {
    pub fn new(
        cloud: ParticleCloud,
        candidates: CandidateSet,
        budget: usize,
        cost: GroundCost,
    ) -> Result<Self, LatticeError> {
        if budget == 0 || budget > candidates.len() {
            return Err(LatticeError::BadBudget {
                budget,
                candidates: candidates.len(),
            });
        }
        if let Some(pd) = cloud.dim() {
            let sd = candidates.sites()[0].len();
            if pd != sd {
                return Err(LatticeError::DimensionMismatch { particles: pd, sites: sd });
            }
        }
        Ok(Self { cloud, candidates, budget, cost })
    }

    /// Objective weight of one particle of source `s`: λ_s / |I_s|.
    pub(crate) fn particle_weight(&self, s: usize) -> f64 {
        let n = self.cloud.particles(s).len();
        if n == 0 {
            0.0
        } else {
            self.cloud.source_weights()[s] / n as f64
        }
    }

    pub(crate) fn site_cost(&self, particle: &[f64], k: usize) -> f64 {
        self.cost.eval(particle, &self.candidates.sites()[k])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorTag {
    ExactMip,
    LpRound,
    Greedy,
}

/// Chosen sites and the particle-to-site assignment. All selectors here
/// return integral assignments (each particle wholly at one site), stored as
/// a candidate index per particle.
#[derive(Clone, Debug)]
pub struct SelectionResult {
    /// One flag per candidate site.
    pub gamma: Vec<bool>,
    /// Per source, per particle: index of the assigned candidate.
    pub assignment: Vec<Vec<usize>>,
    /// Source-weighted mean p-th-power distance of the assignment.
    pub objective: f64,
    pub method: SelectorTag,
    /// Lower bound from the continuous relaxation, when the method computes
    /// one.
    pub relaxation_bound: Option<f64>,
}

impl SelectionResult {
    pub fn selected_indices(&self) -> Vec<usize> {
        self.gamma
            .iter()
            .enumerate()
            .filter_map(|(k, &g)| g.then_some(k))
            .collect()
    }

    pub fn selected_count(&self) -> usize {
        self.gamma.iter().filter(|&&g| g).count()
    }

    /// Assignment weight of particle `(s, i)` to candidate `k` (0 or 1).
    pub fn beta(&self, s: usize, i: usize, k: usize) -> f64 {
        if self.assignment[s][i] == k {
            1.0
        } else {
            0.0
        }
    }

    /// Checks the selection invariants against its problem: capacity,
    /// assignment only to open sites.
    pub fn check(&self, problem: &SelectionProblem) -> bool {
        self.selected_count() <= problem.budget
            && self.gamma.len() == problem.candidates.len()
            && self.assignment.len() == problem.cloud.sources()
            && self.assignment.iter().enumerate().all(|(s, row)| {
                row.len() == problem.cloud.particles(s).len()
                    && row.iter().all(|&k| self.gamma[k])
            })
    }
}

/// Assigns every particle wholly to its nearest site among `selected`
/// (candidate indices); ties go to the lowest site index. Returns the
/// per-source assignment and the weighted objective.
pub fn nearest_assignment(
    problem: &SelectionProblem,
    selected: &[usize],
) -> Result<(Vec<Vec<usize>>, f64), LatticeError> {
    if selected.is_empty() {
        return Err(LatticeError::EmptySites);
    }
    let per_source: Vec<(Vec<usize>, f64)> = exec::map_indexed(problem.cloud.sources(), |s| {
        let w = problem.particle_weight(s);
        let mut cost_sum = 0.0;
        let row: Vec<usize> = problem
            .cloud
            .particles(s)
            .iter()
            .map(|x| {
                let mut best_k = selected[0];
                let mut best_c = problem.site_cost(x, best_k);
                for &k in &selected[1..] {
                    let c = problem.site_cost(x, k);
                    if c < best_c {
                        best_c = c;
                        best_k = k;
                    }
                }
                cost_sum += best_c;
                best_k
            })
            .collect();
        (row, w * cost_sum)
    });
    let mut assignment = Vec::with_capacity(per_source.len());
    let mut objective = 0.0;
    for (row, c) in per_source {
        assignment.push(row);
        objective += c;
    }
    Ok((assignment, objective))
}

/// Builds the implied transition kernel: row `s` puts mass
/// `(1/|I_s|) Σ_i β^{s,i,k}` at site `k`. Rows live on the full selected
/// site list; a zero-weight source with no particles gets a point mass at
/// its nearest site so the kernel stays well-formed.
pub fn implied_kernel(
    problem: &SelectionProblem,
    result: &SelectionResult,
    source_points: &[Vec<f64>],
) -> Result<DiscreteKernel, LatticeError> {
    let selected = result.selected_indices();
    if selected.is_empty() {
        return Err(LatticeError::EmptySites);
    }
    let site_points: Vec<Vec<f64>> = selected
        .iter()
        .map(|&k| problem.candidates.sites()[k].clone())
        .collect();
    // candidate index -> position in the selected list
    let mut pos = vec![usize::MAX; problem.candidates.len()];
    for (j, &k) in selected.iter().enumerate() {
        pos[k] = j;
    }
    let mut rows = Vec::with_capacity(problem.cloud.sources());
    for s in 0..problem.cloud.sources() {
        let group = problem.cloud.particles(s);
        if group.is_empty() {
            let nearest = site_points
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    euclidean(&source_points[s], a)
                        .partial_cmp(&euclidean(&source_points[s], b))
                        .unwrap()
                })
                .map(|(j, _)| j)
                .unwrap();
            let mut w = vec![0.0; site_points.len()];
            w[nearest] = 1.0;
            rows.push(DiscreteMeasure::new(site_points.clone(), w)?);
            continue;
        }
        let mut w = vec![0.0f64; site_points.len()];
        let share = 1.0 / group.len() as f64;
        for &k in &result.assignment[s] {
            w[pos[k]] += share;
        }
        rows.push(DiscreteMeasure::new(site_points.clone(), w)?);
    }
    Ok(DiscreteKernel::new(source_points.to_vec(), rows)?)
}

/// The per-stage error: the `p`-th root of the selection objective, which
/// is exactly the integrated transportation distance between the empirical
/// particle kernel and the implied kernel.
pub fn stage_delta(problem: &SelectionProblem, result: &SelectionResult) -> f64 {
    problem.cost.distance_from_value(result.objective)
}

/// One stage of the approximate chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatticeStage {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub kernel_from_prev: Option<DiscreteKernel>,
    pub delta_prev: Option<f64>,
}

impl LatticeStage {
    /// Root stage: a single deterministic state.
    pub fn root(point: Vec<f64>) -> Self {
        Self {
            points: vec![point],
            weights: vec![1.0],
            kernel_from_prev: None,
            delta_prev: None,
        }
    }

    pub fn marginal(&self) -> Marginal {
        Marginal::new(
            DiscreteMeasure::new(self.points.clone(), self.weights.clone())
                .expect("stage weights normalized"),
        )
    }
}

/// Draws i.i.d. next-state particles from the transition kernel at a given
/// state. Implemented by market models and by synthetic test kernels.
pub trait KernelSampler: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, state: &[f64], count: usize, rng: &mut ChaCha12Rng) -> Vec<Vec<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorKind {
    Exact,
    LpRound,
    Greedy,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "strategy")]
pub enum CandidateStrategy {
    /// Uniform subsample of the pooled particles, `factor * budget` sites.
    PooledSubsample { factor: usize },
    /// Fresh kernel draws from a uniformly chosen positive-weight source.
    FreshSample { factor: usize },
}

impl Default for CandidateStrategy {
    fn default() -> Self {
        CandidateStrategy::PooledSubsample { factor: 5 }
    }
}

#[derive(Clone, Debug)]
pub struct StageConfig {
    pub particles_per_source: usize,
    pub budget: usize,
    pub candidates: CandidateStrategy,
    pub selector: SelectorKind,
    pub cost: GroundCost,
}

/// Deterministic stream derivation: every consumer of randomness gets its
/// own generator keyed by the master seed, a purpose tag, and integer
/// coordinates, so per-source work can run in parallel without sharing
/// generator state.
pub fn stream_rng(master: u64, tag: &str, parts: &[u64]) -> ChaCha12Rng {
    fn mix(h: &mut u64, x: u64) {
        *h ^= x;
        *h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        *h ^= *h >> 33;
        *h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
        *h ^= *h >> 33;
    }
    let mut h = 0x9e37_79b9_7f4a_7c15u64 ^ master;
    for b in tag.bytes() {
        mix(&mut h, b as u64);
    }
    mix(&mut h, 0xdead_beef);
    for &p in parts {
        mix(&mut h, p);
    }
    let mut key = [0u8; 32];
    for chunk in 0..4u64 {
        mix(&mut h, 0xa5a5_a5a5 + chunk);
        key[chunk as usize * 8..(chunk as usize + 1) * 8].copy_from_slice(&h.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

fn run_selector(
    problem: &SelectionProblem,
    selector: SelectorKind,
    rng: &mut ChaCha12Rng,
) -> Result<SelectionResult, LatticeError> {
    match selector {
        SelectorKind::Exact => select_exact_mip(problem, select::DEFAULT_EXACT_CAP),
        SelectorKind::LpRound => select_lp_round(problem, rng),
        SelectorKind::Greedy => select_greedy(problem),
    }
}

/// Samples particles from each positive-weight source, builds a candidate
/// set, runs the configured selector, and produces the next stage with its
/// updated marginal and the stage error of the current transition.
pub fn advance_stage<S: KernelSampler>(
    stage: &LatticeStage,
    sampler: &S,
    config: &StageConfig,
    master_seed: u64,
    stage_index: u64,
) -> Result<LatticeStage, LatticeError> {
    let sources = stage.points.len();
    let n = config.particles_per_source;
    let groups: Vec<Vec<Vec<f64>>> = exec::map_indexed(sources, |s| {
        if stage.weights[s] == 0.0 {
            return Vec::new();
        }
        let mut rng = stream_rng(master_seed, "particles", &[stage_index, s as u64]);
        sampler.sample(&stage.points[s], n, &mut rng)
    });
    let cloud = ParticleCloud::new(groups, stage.weights.clone())?;

    let mut cand_rng = stream_rng(master_seed, "candidates", &[stage_index]);
    let sites = build_candidates(&cloud, &stage.points, sampler, config, &mut cand_rng)?;
    let candidates = CandidateSet::new(sites)?;
    let budget = config.budget.min(candidates.len());
    let problem = SelectionProblem::new(cloud, candidates, budget, config.cost)?;

    let mut sel_rng = stream_rng(master_seed, "rounding", &[stage_index]);
    let result = run_selector(&problem, config.selector, &mut sel_rng)?;
    let kernel = implied_kernel(&problem, &result, &stage.points)?;
    let delta = stage_delta(&problem, &result);

    // next marginal: λ̃_{t+1}(k) = Σ_s λ̃_t(s) Q̃(k|s)
    let site_count = kernel.row(0).len();
    let mut weights = vec![0.0f64; site_count];
    for (s, row) in kernel.rows().iter().enumerate() {
        let lw = stage.weights[s];
        if lw == 0.0 {
            continue;
        }
        for (k, &w) in row.weights().iter().enumerate() {
            weights[k] += lw * w;
        }
    }
    let total: f64 = weights.iter().sum();
    let correction = total - 1.0;
    if correction.abs() > 0.0 && correction.abs() <= 1e-9 {
        let last = weights.len() - 1;
        weights[last] -= correction;
    }
    let points = kernel.row(0).points().to_vec();
    Ok(LatticeStage {
        points,
        weights,
        kernel_from_prev: Some(kernel),
        delta_prev: Some(delta),
    })
}

fn build_candidates<S: KernelSampler>(
    cloud: &ParticleCloud,
    source_points: &[Vec<f64>],
    sampler: &S,
    config: &StageConfig,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<Vec<f64>>, LatticeError> {
    use rand::Rng;
    let target = match config.candidates {
        CandidateStrategy::PooledSubsample { factor } | CandidateStrategy::FreshSample { factor } => {
            (config.budget * factor.max(1)).max(config.budget)
        }
    };
    match config.candidates {
        CandidateStrategy::PooledSubsample { .. } => {
            let pool: Vec<&Vec<f64>> = cloud.pooled().collect();
            if pool.is_empty() {
                return Err(LatticeError::EmptySites);
            }
            if pool.len() <= target {
                return Ok(pool.into_iter().cloned().collect());
            }
            // Floyd-style uniform sample of `target` distinct pool indices.
            let mut chosen: Vec<usize> = Vec::with_capacity(target);
            for j in pool.len() - target..pool.len() {
                let t = rng.random_range(0..=j);
                if chosen.contains(&t) {
                    chosen.push(j);
                } else {
                    chosen.push(t);
                }
            }
            chosen.sort_unstable();
            Ok(chosen.into_iter().map(|i| pool[i].clone()).collect())
        }
        CandidateStrategy::FreshSample { .. } => {
            let live: Vec<usize> = (0..cloud.sources())
                .filter(|&s| cloud.source_weights()[s] > 0.0)
                .collect();
            if live.is_empty() {
                return Err(LatticeError::EmptySites);
            }
            let mut sites = Vec::with_capacity(target);
            while sites.len() < target {
                let s = live[rng.random_range(0..live.len())];
                let mut draws = sampler.sample(&source_points[s], 1, rng);
                sites.append(&mut draws);
            }
            Ok(sites)
        }
    }
}

/// Which branch of the empirical-measure concentration rate applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateBranch {
    /// p > n/2: N^{-1/2}
    FastHalf,
    /// p = n/2: N^{-1/2} ln(1+N)
    HalfWithLog,
    /// p < n/2: N^{-p/n}
    DimensionLimited,
}

impl RateBranch {
    pub fn label(self) -> &'static str {
        match self {
            RateBranch::FastHalf => "p > n/2",
            RateBranch::HalfWithLog => "p = n/2",
            RateBranch::DimensionLimited => "p < n/2",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTerm {
    pub exponent: f64,
    pub with_log: bool,
}

impl RateTerm {
    pub fn evaluate(&self, n_samples: usize) -> f64 {
        let n = n_samples as f64;
        let base = n.powf(self.exponent);
        if self.with_log {
            base * (1.0 + n).ln()
        } else {
            base
        }
    }

    pub fn render(&self) -> String {
        if self.with_log {
            format!("N^({})*ln(1+N)", self.exponent)
        } else {
            format!("N^({})", self.exponent)
        }
    }
}

/// A-priori sampling-error rate for the empirical measure of N kernel
/// draws in dimension n with transport order p and a finite u-th moment.
/// The multiplicative constant depends on (n, p, u) and the moment bound
/// and is reported symbolically, not estimated.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplingErrorReport {
    pub branch: RateBranch,
    pub terms: Vec<RateTerm>,
    pub constant_symbol: String,
    pub samples: usize,
    /// Sum of the terms at N = samples, without the unknown constant.
    pub rate_value: f64,
}

pub fn sampling_error_report(
    n_dim: usize,
    p: f64,
    u: f64,
    moment: f64,
    samples: usize,
) -> Result<SamplingErrorReport, LatticeError> {
    if u <= p {
        return Err(LatticeError::InvalidMomentOrder { u, p });
    }
    let half_n = n_dim as f64 / 2.0;
    let (branch, lead) = if p > half_n {
        (RateBranch::FastHalf, RateTerm { exponent: -0.5, with_log: false })
    } else if p == half_n {
        (RateBranch::HalfWithLog, RateTerm { exponent: -0.5, with_log: true })
    } else {
        (
            RateBranch::DimensionLimited,
            RateTerm { exponent: -p / n_dim as f64, with_log: false },
        )
    };
    let tail = RateTerm { exponent: -(u - p) / u, with_log: false };
    let terms = vec![lead, tail];
    let rate_value = terms.iter().map(|t| t.evaluate(samples)).sum();
    Ok(SamplingErrorReport {
        branch,
        terms,
        constant_symbol: format!("C(n={n_dim}, p={p}, u={u}, M_u={moment})"),
        samples,
        rate_value,
    })
}
