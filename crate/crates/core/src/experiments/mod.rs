//! Seeded experiment runners behind the CLI: basket-option pricing on the
//! selected grid vs. the binomial baseline, Gaussian-mixture site selection
//! under two kernel metrics, estimator-stability comparisons, and CSV
//! report emission.

use crate::kernel_metric::KernelError;
use crate::lattice::{
    advance_stage, select_exact_mip, select_greedy, select_lp_round, stream_rng, CandidateSet,
    CandidateStrategy, LatticeError, LatticeStage, ParticleCloud, SelectionProblem,
    SelectionResult, SelectorKind, StageConfig,
};
use crate::markets::{
    binomial_node_count, binomial_price_american, BasketPut, GbmModel, GbmStepSampler,
    MarketConfig, MarketError,
};
use crate::risk::{backward_evaluate, CostSpec, RiskError, RiskMapping};
use crate::smalllp::LpError;
use crate::transport::{
    wasserstein_exact, DiscreteMeasure, GroundCost, TransportError,
};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("report is empty")]
    EmptyReport,
}

impl From<csv::Error> for ExperimentError {
    fn from(e: csv::Error) -> Self {
        ExperimentError::Io(std::io::Error::other(e))
    }
}

impl From<MarketError> for ExperimentError {
    fn from(e: MarketError) -> Self {
        ExperimentError::Config(e.to_string())
    }
}

impl From<LatticeError> for ExperimentError {
    fn from(e: LatticeError) -> Self {
        match e {
            LatticeError::Lp(_) | LatticeError::RoundingFailed(_) => {
                ExperimentError::Solver(e.to_string())
            }
            other => ExperimentError::Config(other.to_string()),
        }
    }
}

impl From<TransportError> for ExperimentError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::PivotLimit(_) | TransportError::DualInfeasible(_) => {
                ExperimentError::Solver(e.to_string())
            }
            other => ExperimentError::Config(other.to_string()),
        }
    }
}

impl From<KernelError> for ExperimentError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::Transport(t) => t.into(),
            other => ExperimentError::Config(other.to_string()),
        }
    }
}

impl From<RiskError> for ExperimentError {
    fn from(e: RiskError) -> Self {
        ExperimentError::Config(e.to_string())
    }
}

impl From<LpError> for ExperimentError {
    fn from(e: LpError) -> Self {
        ExperimentError::Solver(e.to_string())
    }
}

/// One Gaussian component.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GmmCenter {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// A Gaussian-mixture sampling scenario with a site-selection budget.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GmmConfig {
    pub id: String,
    pub dim: usize,
    pub centers: Vec<GmmCenter>,
    pub weights: Vec<f64>,
    pub particles_per_center: usize,
    pub budget: usize,
}

// Lower-triangular Cholesky factor; `None` if the matrix is not positive
// semidefinite within the jitter floor.
fn cholesky(a: &[Vec<f64>], jitter: f64) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j] + if i == j { jitter } else { 0.0 };
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum < 0.0 {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else if l[j][j] > 0.0 {
                l[i][j] = sum / l[j][j];
            } else {
                l[i][j] = 0.0;
            }
        }
    }
    Some(l)
}

impl GmmConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: GmmConfig = serde_json::from_str(text)
            .map_err(|e| ExperimentError::Config(format!("gmm config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.centers.is_empty() || self.centers.len() != self.weights.len() {
            return Err(ExperimentError::Config(format!(
                "{} centers for {} weights",
                self.centers.len(),
                self.weights.len()
            )));
        }
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(ExperimentError::Config(format!(
                "center weights sum to {sum}"
            )));
        }
        if self.particles_per_center == 0 || self.budget == 0 {
            return Err(ExperimentError::Config(
                "particle count and budget must be positive".into(),
            ));
        }
        for (i, c) in self.centers.iter().enumerate() {
            if c.mean.len() != self.dim || c.cov.len() != self.dim {
                return Err(ExperimentError::Config(format!(
                    "center {i} has wrong dimension"
                )));
            }
            for (r, row) in c.cov.iter().enumerate() {
                if row.len() != self.dim {
                    return Err(ExperimentError::Config(format!(
                        "center {i} covariance row {r} has {} entries",
                        row.len()
                    )));
                }
                for (s, &v) in row.iter().enumerate() {
                    if (v - c.cov[s][r]).abs() > 1e-6 {
                        return Err(ExperimentError::Config(format!(
                            "center {i} covariance is not symmetric at ({r},{s})"
                        )));
                    }
                }
            }
            // positive semidefinite within a small floor
            if cholesky(&c.cov, 1e-8).is_none() {
                return Err(ExperimentError::Config(format!(
                    "center {i} covariance is not positive semidefinite"
                )));
            }
        }
        Ok(())
    }

    fn factors(&self) -> Result<Vec<Vec<Vec<f64>>>, ExperimentError> {
        self.centers
            .iter()
            .enumerate()
            .map(|(i, c)| {
                // symmetrize tiny transcription noise before factoring
                let n = self.dim;
                let mut a = c.cov.clone();
                for r in 0..n {
                    for s in 0..r {
                        let v = 0.5 * (a[r][s] + a[s][r]);
                        a[r][s] = v;
                        a[s][r] = v;
                    }
                }
                cholesky(&a, 0.0)
                    .or_else(|| cholesky(&a, 1e-10))
                    .or_else(|| cholesky(&a, 1e-8))
                    .ok_or_else(|| {
                        ExperimentError::Config(format!("center {i} covariance not factorable"))
                    })
            })
            .collect()
    }

    /// Normalized center weights (exact unit sum).
    fn exact_weights(&self) -> Vec<f64> {
        let sum: f64 = self.weights.iter().sum();
        let mut w: Vec<f64> = self.weights.iter().map(|x| x / sum).collect();
        let excess: f64 = w.iter().sum::<f64>() - 1.0;
        let last = w.len() - 1;
        w[last] -= excess;
        w
    }

    /// Per-center particle clouds for one seeded repetition.
    pub fn sample_cloud(&self, rng_master: u64, rep: u64) -> Result<ParticleCloud, ExperimentError> {
        let factors = self.factors()?;
        let mut groups = Vec::with_capacity(self.centers.len());
        for (s, (c, l)) in self.centers.iter().zip(&factors).enumerate() {
            let mut rng = stream_rng(rng_master, "gmm-particles", &[rep, s as u64]);
            let group: Vec<Vec<f64>> = (0..self.particles_per_center)
                .map(|_| {
                    let z: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    (0..self.dim)
                        .map(|i| {
                            c.mean[i]
                                + l[i].iter().take(i + 1).zip(&z).map(|(a, b)| a * b).sum::<f64>()
                        })
                        .collect()
                })
                .collect();
            groups.push(group);
        }
        Ok(ParticleCloud::new(groups, self.exact_weights())?)
    }
}

/// The six bundled mixture scenarios.
pub fn bundled_gmm_configs() -> Vec<GmmConfig> {
    const SOURCES: [&str; 6] = [
        include_str!("../../configs/gmm_dim2_centers5.json"),
        include_str!("../../configs/gmm_dim2_centers10.json"),
        include_str!("../../configs/gmm_dim2_centers16.json"),
        include_str!("../../configs/gmm_dim3_centers3.json"),
        include_str!("../../configs/gmm_dim3_centers5.json"),
        include_str!("../../configs/gmm_dim5_centers3.json"),
    ];
    SOURCES
        .iter()
        .map(|s| GmmConfig::from_json(s).expect("bundled configs are valid"))
        .collect()
}

/// Bundled market configurations (two- and five-asset).
pub fn bundled_market_config(dim: usize) -> Option<MarketConfig> {
    let text = match dim {
        2 => include_str!("../../configs/market_2d.json"),
        5 => include_str!("../../configs/market_5d.json"),
        _ => return None,
    };
    Some(serde_json::from_str(text).expect("bundled configs are valid"))
}

/// One metric value of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub config: String,
    pub method: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn push(&mut self, config: &str, method: &str, seed: u64, metric: &str, value: f64) {
        self.rows.push(ReportRow {
            config: config.into(),
            method: method.into(),
            seed,
            metric: metric.into(),
            value,
        });
    }

    pub fn extend(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
    }

    /// Stable row order regardless of production order.
    pub fn sorted(mut self) -> Self {
        self.rows.sort_by(|a, b| {
            (&a.config, &a.method, &a.metric, a.seed)
                .cmp(&(&b.config, &b.method, &b.metric, b.seed))
        });
        self
    }

    pub fn values(&self, config: &str, method: &str, metric: &str) -> Vec<f64> {
        let mut picked: Vec<(u64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.config == config && r.method == method && r.metric == metric)
            .map(|r| (r.seed, r.value))
            .collect();
        picked.sort_by_key(|&(s, _)| s);
        picked.into_iter().map(|(_, v)| v).collect()
    }

    /// Mean/std/count per (config, method, metric), sorted.
    pub fn summary(&self) -> Vec<(String, String, String, f64, f64, usize)> {
        let mut keys: Vec<(String, String, String)> = self
            .rows
            .iter()
            .map(|r| (r.config.clone(), r.method.clone(), r.metric.clone()))
            .collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|(c, m, t)| {
                let vals = self.values(&c, &m, &t);
                let n = vals.len();
                let mean = vals.iter().sum::<f64>() / n as f64;
                let var = if n > 1 {
                    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
                } else {
                    0.0
                };
                (c, m, t, mean, var.sqrt(), n)
            })
            .collect()
    }
}

/// Writes `rows.csv`, `summary.csv`, and a gnuplot-friendly `report.dat`
/// under `dir`; returns the three paths. Deterministic byte-for-byte for a
/// fixed report.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    if report.rows.is_empty() {
        return Err(ExperimentError::EmptyReport);
    }
    std::fs::create_dir_all(dir)?;
    let sorted = report.clone().sorted();

    let rows_path = dir.join("rows.csv");
    {
        let mut w = csv::Writer::from_path(&rows_path)?;
        w.write_record(["config", "method", "seed", "metric", "value"])
            .map_err(io_from_csv)?;
        for r in &sorted.rows {
            w.write_record([
                r.config.as_str(),
                r.method.as_str(),
                &r.seed.to_string(),
                r.metric.as_str(),
                &format!("{}", r.value),
            ])
            .map_err(io_from_csv)?;
        }
        w.flush()?;
    }

    let summary_path = dir.join("summary.csv");
    {
        let mut w = csv::Writer::from_path(&summary_path)?;
        w.write_record(["config", "method", "metric", "mean", "std", "n"])
            .map_err(io_from_csv)?;
        for (c, m, t, mean, std, n) in sorted.summary() {
            w.write_record([
                c.as_str(),
                m.as_str(),
                t.as_str(),
                &format!("{mean}"),
                &format!("{std}"),
                &n.to_string(),
            ])
            .map_err(io_from_csv)?;
        }
        w.flush()?;
    }

    let dat_path = dir.join("report.dat");
    {
        let mut text = String::from("# config method metric seed value\n");
        for r in &sorted.rows {
            writeln!(
                text,
                "{} {} {} {} {}",
                r.config, r.method, r.metric, r.seed, r.value
            )
            .expect("string write");
        }
        std::fs::write(&dat_path, text)?;
    }
    Ok(vec![rows_path, summary_path, dat_path])
}

fn io_from_csv(e: csv::Error) -> ExperimentError {
    ExperimentError::Io(std::io::Error::other(e))
}

/// Knobs shared by the experiment runners.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub seed: u64,
    pub reps: usize,
    pub selector: SelectorKind,
    pub particles: usize,
    pub budget: usize,
    pub candidates_factor: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            reps: 5,
            selector: SelectorKind::Greedy,
            particles: 1000,
            budget: 100,
            candidates_factor: 5,
        }
    }
}

/// Builds the full lattice chain for a market model and prices the basket
/// put with the stopping recursion; returns (price, per-stage deltas,
/// max stage size).
pub fn grid_price_basket(
    config: &MarketConfig,
    opts: &RunOptions,
    rep: u64,
) -> Result<(f64, Vec<f64>, usize), ExperimentError> {
    let model = config.model()?;
    let opt = config.option()?;
    let sampler = GbmStepSampler::new(model.clone());
    let stage_config = StageConfig {
        particles_per_source: opts.particles,
        budget: opts.budget,
        candidates: CandidateStrategy::PooledSubsample { factor: opts.candidates_factor },
        selector: opts.selector,
        cost: GroundCost::order_one(),
    };
    let master = opts.seed.wrapping_mul(0x9e37_79b9).wrapping_add(rep);
    let mut stages = vec![LatticeStage::root(model.s0.clone())];
    let mut deltas = Vec::with_capacity(model.steps);
    for t in 0..model.steps {
        let next = advance_stage(stages.last().unwrap(), &sampler, &stage_config, master, t as u64)?;
        deltas.push(next.delta_prev.unwrap_or(f64::NAN));
        stages.push(next);
    }
    let max_points = stages.iter().map(|s| s.points.len()).max().unwrap_or(0);
    let payoff = move |s: &[f64]| opt.payoff(s);
    let costs = CostSpec::stopping(payoff);
    let discount = (-model.r * model.dt()).exp();
    let vf = backward_evaluate(&stages, &costs, &RiskMapping::Stopping, discount)?;
    Ok((vf.initial(), deltas, max_points))
}

/// Builds the first few lattice stages with per-stage budgets and particle
/// counts and returns the stagewise transport distances between the
/// sampled kernel and its selected reduction. Budgets typically grow with
/// the stage index, mirroring how the marginal support spreads out, which
/// keeps the per-stage distances from deteriorating.
pub fn delta_trajectory(
    config: &MarketConfig,
    budgets: &[usize],
    particles: &[usize],
    opts: &RunOptions,
    rep: u64,
) -> Result<Vec<f64>, ExperimentError> {
    if budgets.len() != particles.len() || budgets.is_empty() {
        return Err(ExperimentError::Config(
            "budget and particle schedules must have equal, nonzero length".into(),
        ));
    }
    let model = config.model()?;
    if budgets.len() > model.steps {
        return Err(ExperimentError::Config(format!(
            "schedule covers {} stages but the model has {}",
            budgets.len(),
            model.steps
        )));
    }
    let sampler = GbmStepSampler::new(model.clone());
    let master = opts.seed.wrapping_mul(0x9e37_79b9).wrapping_add(rep);
    let mut stage = LatticeStage::root(model.s0.clone());
    let mut deltas = Vec::with_capacity(budgets.len());
    for (t, (&budget, &n)) in budgets.iter().zip(particles).enumerate() {
        let stage_config = StageConfig {
            particles_per_source: n,
            budget,
            candidates: CandidateStrategy::PooledSubsample { factor: opts.candidates_factor },
            selector: opts.selector,
            cost: GroundCost::order_one(),
        };
        let next = advance_stage(&stage, &sampler, &stage_config, master, t as u64)?;
        deltas.push(next.delta_prev.unwrap_or(f64::NAN));
        stage = next;
    }
    Ok(deltas)
}

/// Grid-selection pricing vs. the binomial baseline across seeds.
pub fn run_basket_experiment(
    config: &MarketConfig,
    opts: &RunOptions,
) -> Result<ExperimentReport, ExperimentError> {
    let mut report = ExperimentReport::default();
    let id = format!("basket-{}d-n{}", config.s0.len(), config.steps);

    let model = config.model()?;
    let opt = config.option()?;
    let t0 = Instant::now();
    let binom = binomial_price_american(&model, &opt)?;
    report.push(&id, "binomial", 0, "price", binom);
    report.push(&id, "binomial", 0, "wall_s", t0.elapsed().as_secs_f64());
    report.push(
        &id,
        "binomial",
        0,
        "nodes",
        binomial_node_count(model.dim() as u32, model.steps as u32) as f64,
    );

    for rep in 0..opts.reps {
        let t0 = Instant::now();
        let (price, deltas, max_points) = grid_price_basket(config, opts, rep as u64)?;
        let seed = rep as u64;
        report.push(&id, "grid", seed, "price", price);
        report.push(&id, "grid", seed, "wall_s", t0.elapsed().as_secs_f64());
        report.push(&id, "grid", seed, "max_points", max_points as f64);
        for (t, d) in deltas.iter().enumerate().take(8) {
            report.push(&id, "grid", seed, &format!("delta_{t}"), *d);
        }
    }
    Ok(report)
}

// Greedy minimization of the worst per-source mean p-cost (the supremum
// aggregation of the selection objective), with a precomputed cost matrix.
fn select_sup_greedy(
    problem: &SelectionProblem,
) -> Result<SelectionResult, ExperimentError> {
    let k = problem.candidates.len();
    let m = problem.budget.min(k);

    struct Part {
        source: usize,
        share: f64, // 1/|I_s|
    }
    let mut parts: Vec<Part> = Vec::new();
    let mut points: Vec<&[f64]> = Vec::new();
    let mut live_sources = 0usize;
    for s in 0..problem.cloud.sources() {
        if problem.cloud.source_weights()[s] == 0.0 {
            continue;
        }
        live_sources = live_sources.max(s + 1);
        let n = problem.cloud.particles(s).len();
        for x in problem.cloud.particles(s) {
            parts.push(Part { source: s, share: 1.0 / n as f64 });
            points.push(x);
        }
    }
    let costs: Vec<f64> = {
        let sites = problem.candidates.sites();
        let mut c = vec![0.0f64; points.len() * k];
        for (i, x) in points.iter().enumerate() {
            for (j, z) in sites.iter().enumerate() {
                c[i * k + j] = problem.cost.eval(x, z);
            }
        }
        c
    };

    let mut current = vec![f64::INFINITY; points.len()];
    let mut selected: Vec<usize> = Vec::with_capacity(m);
    let mut picked = vec![false; k];
    let mut source_cost = vec![0.0f64; live_sources];

    for _ in 0..m {
        let mut best: Option<(f64, usize)> = None;
        for c in 0..k {
            if picked[c] {
                continue;
            }
            // resulting max per-source mean cost if c is added
            let mut trial = vec![0.0f64; live_sources];
            for (i, part) in parts.iter().enumerate() {
                let v = costs[i * k + c].min(current[i]);
                let v = if v.is_infinite() { costs[i * k + c] } else { v };
                trial[part.source] += part.share * v;
            }
            let worst = trial.iter().cloned().fold(0.0, f64::max);
            match best {
                Some((b, _)) if worst >= b => {}
                _ => best = Some((worst, c)),
            }
        }
        let (_, c) = best.expect("candidates remain");
        picked[c] = true;
        selected.push(c);
        for (i, part) in parts.iter().enumerate() {
            let v = costs[i * k + c];
            if v < current[i] {
                current[i] = v;
            }
            let _ = part;
        }
    }
    for (i, part) in parts.iter().enumerate() {
        source_cost[part.source] += part.share * current[i];
    }
    selected.sort_unstable();

    let (assignment, _) = crate::lattice::nearest_assignment(problem, &selected)?;
    let mut gamma = vec![false; k];
    for &c in &selected {
        gamma[c] = true;
    }
    let objective = source_cost.iter().cloned().fold(0.0, f64::max);
    Ok(SelectionResult {
        gamma,
        assignment,
        objective,
        method: crate::lattice::SelectorTag::Greedy,
        relaxation_bound: None,
    })
}

fn pooled_measure(cloud: &ParticleCloud) -> Result<DiscreteMeasure, ExperimentError> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for s in 0..cloud.sources() {
        let lw = cloud.source_weights()[s];
        if lw == 0.0 {
            continue;
        }
        let n = cloud.particles(s).len();
        for x in cloud.particles(s) {
            points.push(x.clone());
            weights.push(lw / n as f64);
        }
    }
    let total: f64 = weights.iter().sum();
    let excess = total - 1.0;
    if excess.abs() > 0.0 && excess.abs() < 1e-9 {
        // absorb rounding noise into the heaviest atom so nothing goes negative
        let argmax = weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        weights[argmax] -= excess;
    }
    Ok(DiscreteMeasure::new(points, weights)?)
}

fn selected_measure(
    problem: &SelectionProblem,
    result: &SelectionResult,
) -> Result<DiscreteMeasure, ExperimentError> {
    let selected = result.selected_indices();
    let mut pos = vec![usize::MAX; problem.candidates.len()];
    for (j, &c) in selected.iter().enumerate() {
        pos[c] = j;
    }
    let mut weights = vec![0.0f64; selected.len()];
    for s in 0..problem.cloud.sources() {
        let lw = problem.cloud.source_weights()[s];
        if lw == 0.0 {
            continue;
        }
        let n = problem.cloud.particles(s).len();
        for &c in &result.assignment[s] {
            weights[pos[c]] += lw / n as f64;
        }
    }
    let points: Vec<Vec<f64>> = selected
        .iter()
        .map(|&c| problem.candidates.sites()[c].clone())
        .collect();
    let total: f64 = weights.iter().sum();
    let excess = total - 1.0;
    if excess.abs() > 0.0 && excess.abs() < 1e-9 {
        // absorb rounding noise into the heaviest atom so nothing goes negative
        let argmax = weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        weights[argmax] -= excess;
    }
    Ok(DiscreteMeasure::new(points, weights)?)
}

fn subsample_candidates(
    cloud: &ParticleCloud,
    target: usize,
    rng: &mut ChaCha12Rng,
) -> Result<CandidateSet, ExperimentError> {
    let pool: Vec<Vec<f64>> = cloud.pooled().cloned().collect();
    if pool.len() <= target {
        return Ok(CandidateSet::new(pool)?);
    }
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
    Ok(CandidateSet::new(
        chosen.into_iter().map(|i| pool[i].clone()).collect(),
    )?)
}

/// Selects representative sites under the integrated and the supremum
/// kernel metrics and reports the order-1 transport distance of each
/// selected distribution to the pooled particle distribution.
pub fn run_gmm_selection(
    config: &GmmConfig,
    opts: &RunOptions,
) -> Result<ExperimentReport, ExperimentError> {
    config.validate()?;
    let mut report = ExperimentReport::default();
    let cost = GroundCost::order_one();
    for rep in 0..opts.reps {
        let cloud = config.sample_cloud(opts.seed, rep as u64)?;
        let total = cloud.total_particles();
        let budget = config.budget.min(total);
        let mut cand_rng = stream_rng(opts.seed, "gmm-candidates", &[rep as u64]);
        let target = (budget * opts.candidates_factor.max(1)).max(budget);
        let candidates = subsample_candidates(&cloud, target, &mut cand_rng)?;
        let budget = budget.min(candidates.len());
        let problem = SelectionProblem::new(cloud, candidates, budget, cost)?;
        let pooled = pooled_measure(&problem.cloud)?;

        let t0 = Instant::now();
        let itd_sel = select_greedy(&problem)?;
        let itd_time = t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let sup_sel = select_sup_greedy(&problem)?;
        let sup_time = t0.elapsed().as_secs_f64();

        let seed = rep as u64;
        for (tag, sel, wall) in [
            ("itd", &itd_sel, itd_time),
            ("sup", &sup_sel, sup_time),
        ] {
            let measure = selected_measure(&problem, sel)?;
            let (w1, _) = wasserstein_exact(&pooled, &measure, &cost)?;
            report.push(&config.id, tag, seed, "w1_to_pooled", w1);
            report.push(&config.id, tag, seed, "objective", sel.objective);
            report.push(&config.id, tag, seed, "selected", sel.selected_count() as f64);
            report.push(&config.id, tag, seed, "select_wall_s", wall);
        }
    }
    Ok(report)
}

/// Compares the stability of mean / mean-semideviation estimators of the
/// terminal basket value: raw Monte Carlo plug-in vs. the grid-selected
/// distribution. Reports per-repetition estimates; the summary's std column
/// is the across-repetition stability.
pub fn run_risk_stability(
    config: &MarketConfig,
    opts: &RunOptions,
    mc_reps: usize,
) -> Result<ExperimentReport, ExperimentError> {
    let model = config.model()?;
    let opt = config.option()?;
    let id = format!("stability-{}d", config.s0.len());
    let mut report = ExperimentReport::default();
    let kappa = 1.0;

    let estimate = |weights: &[f64], values: &[f64]| -> (f64, f64) {
        let mean: f64 = weights.iter().zip(values).map(|(w, v)| w * v).sum();
        let semidev: f64 = weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * (v - mean).max(0.0))
            .sum();
        (mean, mean + kappa * semidev)
    };

    // terminal samples in one exact lognormal step over the full horizon
    let draw_terminal = |rng: &mut ChaCha12Rng, count: usize| -> Result<Vec<Vec<f64>>, ExperimentError> {
        (0..count)
            .map(|_| Ok(model.sample_step(&model.s0, model.maturity, rng)?))
            .collect()
    };

    for rep in 0..opts.reps {
        let mut rng = stream_rng(opts.seed, "stability-grid", &[rep as u64]);
        let states = draw_terminal(&mut rng, opts.particles)?;
        let cloud = ParticleCloud::single(states)?;
        let mut cand_rng = stream_rng(opts.seed, "stability-cands", &[rep as u64]);
        let target = (opts.budget * opts.candidates_factor.max(1)).max(opts.budget);
        let candidates = subsample_candidates(&cloud, target, &mut cand_rng)?;
        let budget = opts.budget.min(candidates.len());
        let problem = SelectionProblem::new(cloud, candidates, budget, GroundCost::order_one())?;
        let sel = match opts.selector {
            SelectorKind::Greedy => select_greedy(&problem)?,
            SelectorKind::LpRound => {
                let mut r = stream_rng(opts.seed, "stability-round", &[rep as u64]);
                select_lp_round(&problem, &mut r)?
            }
            SelectorKind::Exact => select_exact_mip(&problem, 2_000)?,
        };
        let measure = selected_measure(&problem, &sel)?;
        let values: Vec<f64> = measure.points().iter().map(|s| basket_value(&opt, s)).collect();
        let (mean, msd) = estimate(measure.weights(), &values);
        report.push(&id, "grid", rep as u64, "mean", mean);
        report.push(&id, "grid", rep as u64, "msd", msd);
    }

    for rep in 0..mc_reps {
        let mut rng = stream_rng(opts.seed, "stability-mc", &[rep as u64]);
        let states = draw_terminal(&mut rng, opts.particles)?;
        let values: Vec<f64> = states.iter().map(|s| basket_value(&opt, s)).collect();
        let weights = vec![1.0 / values.len() as f64; values.len()];
        let (mean, msd) = estimate(&weights, &values);
        report.push(&id, "monte-carlo", rep as u64, "mean", mean);
        report.push(&id, "monte-carlo", rep as u64, "msd", msd);
    }
    Ok(report)
}

fn basket_value(opt: &BasketPut, s: &[f64]) -> f64 {
    opt.weights.iter().zip(s).map(|(w, x)| w * x).sum()
}

/// Convenience wrapper for pricing plus the GBM sampler used by tests.
pub fn two_asset_model() -> GbmModel {
    bundled_market_config(2).unwrap().model().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_parse_and_validate() {
        let configs = bundled_gmm_configs();
        assert_eq!(configs.len(), 6);
        let first = &configs[0];
        assert_eq!(first.id, "dim2-centers5");
        assert!((first.centers[0].mean[0] - 0.31266704).abs() < 1e-12);
        assert!((first.centers[0].mean[1] - 0.27504179).abs() < 1e-12);
        assert_eq!(first.particles_per_center, 400);
        assert_eq!(first.budget, 100);
        let five_d = &configs[5];
        assert_eq!(five_d.dim, 5);
        assert_eq!(five_d.budget, 600);
    }

    #[test]
    fn bundled_markets_parse() {
        let m2 = bundled_market_config(2).unwrap();
        assert_eq!(m2.steps, 50);
        assert_eq!(m2.sigma[0], vec![0.5, -0.2]);
        let m5 = bundled_market_config(5).unwrap();
        assert_eq!(m5.sigma[3][1], 0.03);
        assert!(bundled_market_config(4).is_none());
    }

    #[test]
    fn gmm_sampling_deterministic() {
        let config = &bundled_gmm_configs()[0];
        let a = config.sample_cloud(9, 0).unwrap();
        let b = config.sample_cloud(9, 0).unwrap();
        assert_eq!(a.particles(0), b.particles(0));
        assert_eq!(a.total_particles(), 5 * 400);
    }

    #[test]
    fn report_emission_deterministic() {
        let mut report = ExperimentReport::default();
        report.push("c", "m", 1, "x", 1.5);
        report.push("c", "m", 0, "x", 2.5);
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&report, dir.path()).unwrap();
        let first: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
        let paths2 = emit_report(&report, dir.path()).unwrap();
        let second: Vec<Vec<u8>> = paths2.iter().map(|p| std::fs::read(p).unwrap()).collect();
        assert_eq!(first, second);
        let rows = String::from_utf8(first[0].clone()).unwrap();
        let mut lines = rows.lines();
        assert_eq!(lines.next().unwrap(), "config,method,seed,metric,value");
        // sorted by seed within the group
        assert!(lines.next().unwrap().starts_with("c,m,0"));
    }

    #[test]
    fn empty_report_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_report(&ExperimentReport::default(), dir.path()),
            Err(ExperimentError::EmptyReport)
        ));
    }

    #[test]
    fn stability_zero_variance_model() {
        let config = MarketConfig {
            s0: vec![10.0, 10.0],
            r: 0.0,
            sigma: vec![vec![0.0; 2]; 2],
            maturity: 1.0,
            steps: 1,
            strike: 10.0,
            weights: vec![0.5, 0.5],
        };
        let opts = RunOptions {
            reps: 3,
            particles: 50,
            budget: 10,
            ..RunOptions::default()
        };
        let report = run_risk_stability(&config, &opts, 3).unwrap();
        for method in ["grid", "monte-carlo"] {
            let means = report.values("stability-2d", method, "mean");
            let msds = report.values("stability-2d", method, "msd");
            for (m, d) in means.iter().zip(&msds) {
                assert!((m - 10.0).abs() < 1e-9, "{method} mean {m}");
                assert!((d - 10.0).abs() < 1e-9, "{method} msd {d}");
            }
        }
    }

    #[test]
    fn gmm_selection_full_budget_zero_distance() {
        let mut config = bundled_gmm_configs()[0].clone();
        config.particles_per_center = 6;
        config.budget = 30;
        let opts = RunOptions {
            reps: 1,
            candidates_factor: 100,
            ..RunOptions::default()
        };
        let report = run_gmm_selection(&config, &opts).unwrap();
        for method in ["itd", "sup"] {
            let w1 = report.values("dim2-centers5", method, "w1_to_pooled");
            assert!(w1[0] < 1e-9, "{method}: {}", w1[0]);
        }
    }
}
