use clap::{Parser, Subcommand, ValueEnum};
use kernelgrid::experiments::{
    bundled_gmm_configs, bundled_market_config, emit_report, run_basket_experiment,
    run_gmm_selection, run_risk_stability, ExperimentError, GmmConfig, RunOptions,
};
use kernelgrid::kernel_metric::{itd, Marginal};
use kernelgrid::lattice::SelectorKind;
use kernelgrid::markets::MarketConfig;
use kernelgrid::transport::{DiscreteMeasure, GroundCost};
use kernelgrid::DiscreteKernel;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kernelgrid", about = "Scenario-lattice construction and risk evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SelectorArg {
    Exact,
    LpRound,
    Greedy,
}

impl From<SelectorArg> for SelectorKind {
    fn from(s: SelectorArg) -> Self {
        match s {
            SelectorArg::Exact => SelectorKind::Exact,
            SelectorArg::LpRound => SelectorKind::LpRound,
            SelectorArg::Greedy => SelectorKind::Greedy,
        }
    }
}

#[derive(clap::Args)]
struct CommonOpts {
    /// Master seed; all randomness derives from it deterministically
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of seeded repetitions
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Output directory for CSV / gnuplot reports
    #[arg(long)]
    out: Option<PathBuf>,
    /// Site-selection algorithm
    #[arg(long, value_enum, default_value_t = SelectorArg::Greedy)]
    selector: SelectorArg,
    /// Number of sites kept per stage
    #[arg(long, default_value_t = 100)]
    budget: usize,
    /// Particles sampled per source state
    #[arg(long, default_value_t = 1000)]
    particles: usize,
    /// Candidate pool size as a multiple of the budget
    #[arg(long, default_value_t = 5)]
    candidates_factor: usize,
}

impl CommonOpts {
    fn run_options(&self) -> RunOptions {
        RunOptions {
            seed: self.seed,
            reps: self.reps,
            selector: self.selector.into(),
            particles: self.particles,
            budget: self.budget,
            candidates_factor: self.candidates_factor,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Price a basket put on a selected scenario lattice vs. the binomial baseline
    PriceBasket {
        /// Market config JSON; defaults to the bundled two-asset market
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Select representative sites for a Gaussian-mixture kernel and compare metrics
    GmmSelect {
        /// Mixture config JSON or a bundled id such as dim2-centers5
        #[arg(long, default_value = "dim2-centers5")]
        config: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Compare estimator stability: grid-selected distribution vs. raw Monte Carlo
    RiskStability {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Monte Carlo plug-in repetitions
        #[arg(long, default_value_t = 200)]
        mc_reps: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Integrated transportation distance between two kernels stored as JSON
    KernelDistance {
        first: PathBuf,
        second: PathBuf,
        /// Source-marginal weights JSON (array); uniform if omitted
        #[arg(long)]
        marginal: Option<PathBuf>,
        /// Ground-distance order
        #[arg(long, default_value_t = 1.0)]
        p: f64,
    },
}

fn load_market(path: &Option<PathBuf>) -> Result<MarketConfig, ExperimentError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| ExperimentError::Config(format!("{}: {e}", p.display())))
        }
        None => Ok(bundled_market_config(2).expect("bundled two-asset market")),
    }
}

fn load_gmm(spec: &str) -> Result<GmmConfig, ExperimentError> {
    if let Some(found) = bundled_gmm_configs().into_iter().find(|c| c.id == spec) {
        return Ok(found);
    }
    let path = PathBuf::from(spec);
    if path.exists() {
        return GmmConfig::from_json(&std::fs::read_to_string(&path)?);
    }
    Err(ExperimentError::Config(format!(
        "no bundled config or file named {spec}"
    )))
}

fn finish(
    report: kernelgrid::experiments::ExperimentReport,
    out: &Option<PathBuf>,
) -> Result<(), ExperimentError> {
    for (config, method, metric, mean, std, n) in report.summary() {
        println!("{config} {method} {metric}: mean {mean:.6} std {std:.6} (n={n})");
    }
    if let Some(dir) = out {
        let paths = emit_report(&report, dir)?;
        for p in paths {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn kernel_distance(
    first: &PathBuf,
    second: &PathBuf,
    marginal: &Option<PathBuf>,
    p: f64,
) -> Result<(), ExperimentError> {
    let parse = |path: &PathBuf| -> Result<DiscreteKernel, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
    };
    let a = parse(first)?;
    let b = parse(second)?;
    let lambda = match marginal {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let weights: Vec<f64> = serde_json::from_str(&text)
                .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
            let measure = DiscreteMeasure::new(a.sources().to_vec(), weights)
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
            Marginal::new(measure)
        }
        None => Marginal::uniform(&a),
    };
    let cost = GroundCost::new(p).map_err(|e| ExperimentError::Config(e.to_string()))?;
    let d = itd(&lambda, &a, &b, &cost)?;
    println!("{d}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::PriceBasket { config, common } => {
            let market = load_market(&config)?;
            let report = run_basket_experiment(&market, &common.run_options())?;
            finish(report, &common.out)
        }
        Command::GmmSelect { config, common } => {
            let gmm = load_gmm(&config)?;
            let report = run_gmm_selection(&gmm, &common.run_options())?;
            finish(report, &common.out)
        }
        Command::RiskStability { config, mc_reps, common } => {
            let market = load_market(&config)?;
            let report = run_risk_stability(&market, &common.run_options(), mc_reps)?;
            finish(report, &common.out)
        }
        Command::KernelDistance { first, second, marginal, p } => {
            kernel_distance(&first, &second, &marginal, p)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (ExperimentError::Config(_) | ExperimentError::Io(_) | ExperimentError::EmptyReport)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e @ ExperimentError::Solver(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
