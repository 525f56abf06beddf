//! `asymlq` command-line interface.
//!
//! Exit codes: 0 success, 1 model validation failure, 2 solver failure,
//! 3 I/O, parse or usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use asymlq::belief_analysis::{analysis_csv, analyze_stage};
use asymlq::best_response::{
    run_best_response, trace_to_json, BestResponseConfig, IterationOrder, Player,
};
use asymlq::experiments::{
    example_config, monte_carlo_cost, run_example, run_random_suite, ExperimentError, SuiteConfig,
};
use asymlq::game_model::{load_spec, Dims, ModelError, RandomInstanceConfig};
use clap::{Parser, Subcommand, ValueEnum};

const MODEL_SCHEMA: &str = include_str!("../../../docs/model.schema.json");
const TOL_ENV: &str = "ASYMLQ_TOL";

#[derive(Parser)]
#[command(
    name = "asymlq",
    version,
    about = "Best-response dynamics for zero-sum LQG games with asymmetric information"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and report every violation.
    Validate { model: PathBuf },
    /// Best-response iteration.
    Br {
        #[command(subcommand)]
        action: BrAction,
    },
    /// Gramian, Hankel and Cholesky decay analysis of one stage.
    Analyze {
        model: PathBuf,
        /// Best-response order of the stage to analyze.
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, value_enum, default_value_t = PlayerArg::Min)]
        player: PlayerArg,
        /// Low-rank approximation ranks, comma separated (default: half and full state dimension).
        #[arg(long, value_delimiter = ',')]
        ranks: Option<Vec<usize>>,
        /// CSV output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the two-state example game and write its data files.
    Example {
        #[arg(long, default_value = "example_out")]
        out: PathBuf,
    },
    /// Random-instance suite of Gramian and Hankel value proportions.
    Suite {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// n,m1,m2,p1,p2
        #[arg(long, default_value = "1,1,1,1,1")]
        dims: Dims,
        #[arg(long, default_value_t = 5)]
        iters: usize,
        /// Thresholds, comma separated and descending.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e-5, 1e-10])]
        thresholds: Vec<f64>,
        /// Worker threads (default: available cores).
        #[arg(long)]
        parallelism: Option<usize>,
        /// Output directory for suite.json and proportions.csv (default: CSV to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the final strategies' average cost.
    Simulate {
        model: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1_000)]
        burn_in: usize,
        #[arg(long, default_value_t = 10)]
        max_k: usize,
        #[arg(long)]
        tol: Option<f64>,
    },
}

#[derive(Subcommand)]
enum BrAction {
    /// Alternate best responses until both costs settle or max-k is reached.
    Run {
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        max_k: usize,
        /// Relative cost-change tolerance (default: $ASYMLQ_TOL or 1e-6).
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_enum, default_value_t = OrderArg::MinFirst)]
        order: OrderArg,
        /// Include gains and Riccati solutions in the output.
        #[arg(long)]
        verbose: bool,
        /// JSON output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PlayerArg {
    Min,
    Max,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    MinFirst,
    MaxFirst,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Solver(String),
    Io(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Solver(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Solver(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Validation(report) => {
                Failure::Validation(format!("invalid model:\n{report}"))
            }
            ModelError::R2SearchFailed { .. } => Failure::Solver(e.to_string()),
            ModelError::Parse { .. } | ModelError::Io(_) => Failure::Io(e.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Model(m) => m.into(),
            ExperimentError::Trace(_) | ExperimentError::Analysis(_) => {
                Failure::Solver(e.to_string())
            }
            ExperimentError::Io(_)
            | ExperimentError::Json(_)
            | ExperimentError::InvalidArgument(_) => Failure::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn tolerance(flag: Option<f64>) -> Result<f64, Failure> {
    let tol = match (flag, std::env::var(TOL_ENV)) {
        (Some(t), _) => t,
        (None, Ok(raw)) => raw
            .trim()
            .parse()
            .map_err(|e| Failure::Io(format!("{TOL_ENV}={raw:?} is not a number: {e}")))?,
        (None, Err(_)) => BestResponseConfig::default().tol,
    };
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Failure::Io(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    Ok(tol)
}

fn write_or_print(out: Option<&Path>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn to_json(value: &impl serde::Serialize) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Io(e.to_string()))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { model } => {
            let spec = load_spec(&model)?;
            println!("{}: valid (dims {})", model.display(), spec.dims());
        }
        Command::Br {
            action:
                BrAction::Run {
                    model,
                    max_k,
                    tol,
                    order,
                    verbose,
                    out,
                },
        } => {
            let spec = load_spec(&model)?;
            let config = BestResponseConfig {
                max_k,
                tol: tolerance(tol)?,
                order: match order {
                    OrderArg::MinFirst => IterationOrder::MinimizerFirst,
                    OrderArg::MaxFirst => IterationOrder::MaximizerFirst,
                },
                ..Default::default()
            };
            let trace =
                run_best_response(&spec, &config).map_err(|e| Failure::Solver(e.to_string()))?;
            write_or_print(out.as_deref(), &to_json(&trace_to_json(&trace, verbose))?)?;
            eprintln!(
                "converged: {} (relative change {:.3e}, {} stages)",
                trace.converged,
                trace.final_relative_change,
                trace.stages.len()
            );
        }
        Command::Analyze {
            model,
            k,
            player,
            ranks,
            out,
        } => {
            let spec = load_spec(&model)?;
            if k == 0 {
                return Err(Failure::Io("--k must be at least 1".into()));
            }
            let config = BestResponseConfig {
                max_k: k,
                stop_on_convergence: false,
                ..Default::default()
            };
            let trace =
                run_best_response(&spec, &config).map_err(|e| Failure::Solver(e.to_string()))?;
            let player = match player {
                PlayerArg::Min => Player::Minimizer,
                PlayerArg::Max => Player::Maximizer,
            };
            let stage = trace
                .stage(player, k)
                .ok_or_else(|| Failure::Solver(format!("no {player} stage at k={k}")))?;
            let dim = stage.plant.state_dim;
            let ranks = ranks.unwrap_or_else(|| vec![dim.div_ceil(2), dim]);
            let analysis =
                analyze_stage(stage, &ranks).map_err(|e| Failure::Solver(e.to_string()))?;
            write_or_print(out.as_deref(), &analysis_csv(&analysis))?;
            for b in &analysis.bounds {
                eprintln!(
                    "l={} rank={} (limit {}) error={:.3e} bound={:.3e} satisfied={}",
                    b.l, b.numerical_rank, b.rank_limit, b.actual_error, b.bound, b.satisfied
                );
            }
            if let Some(reason) = &analysis.bounds_skipped {
                eprintln!("approximation bounds skipped: {reason}");
            }
        }
        Command::Example { out } => {
            let config = BestResponseConfig {
                tol: tolerance(None)?,
                ..example_config()
            };
            let run = run_example(&out, &config)?;
            for file in &run.files {
                println!("{}", file.display());
            }
            eprintln!(
                "converged: {} (relative change {:.3e})",
                run.trace.converged, run.trace.final_relative_change
            );
        }
        Command::Suite {
            count,
            seed,
            dims,
            iters,
            thresholds,
            parallelism,
            out,
        } => {
            let defaults = SuiteConfig::default();
            let config = SuiteConfig {
                count,
                seed,
                iterations: iters,
                thresholds,
                parallelism: parallelism.unwrap_or(defaults.parallelism),
                instance: RandomInstanceConfig {
                    dims,
                    ..Default::default()
                },
                ..defaults
            };
            let stats = run_random_suite(&config)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    let report = serde_json::json!({ "config": config, "stats": stats });
                    std::fs::write(dir.join("suite.json"), to_json(&report)?)?;
                    std::fs::write(dir.join("proportions.csv"), stats.to_csv())?;
                }
                None => print!("{}", stats.to_csv()),
            }
            eprintln!(
                "{} of {} instances succeeded",
                stats.succeeded, stats.instance_count
            );
        }
        Command::Simulate {
            model,
            steps,
            seed,
            burn_in,
            max_k,
            tol,
        } => {
            let spec = load_spec(&model)?;
            let config = BestResponseConfig {
                max_k,
                tol: tolerance(tol)?,
                ..Default::default()
            };
            let trace =
                run_best_response(&spec, &config).map_err(|e| Failure::Solver(e.to_string()))?;
            let estimate = monte_carlo_cost(&spec, &trace, steps, seed, burn_in)?;
            let analytic = trace.final_pair_cost().expect("non-empty trace");
            let report = serde_json::json!({
                "analytic_cost": analytic,
                "monte_carlo": estimate,
                "standard_errors_off": (estimate.mean_cost - analytic) / estimate.std_error,
                "converged": trace.converged,
            });
            print!("{}", to_json(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            eprintln!("\nModel file schema:\n{MODEL_SCHEMA}");
            return ExitCode::from(3);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}
