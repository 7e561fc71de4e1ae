use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coloshape_cli::config::{
    load_file_config, resolve_forest, resolve_icp, resolve_simulate, resolve_smoother,
    ForestOverrides, IcpOverrides, SimulateOverrides,
};
use coloshape_cli::{commands, CliError};

/// Colon shape estimation from colonoscope shape: simulated phantom data,
/// per-marker regression forests, ICP registration, and leave-one-out
/// evaluation.
#[derive(Parser)]
#[command(name = "coloshape", version)]
struct Cli {
    /// TOML config file; flags override it. Defaults to $COLOSHAPE_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate simulated insertion sequences.
    Simulate(SimulateArgs),
    /// Train per-marker regression forests from sequence files.
    Train(TrainArgs),
    /// Estimate colon shapes for a sequence and export plot-ready rows.
    Estimate(EstimateArgs),
    /// Compare estimates against a ground-truth sequence.
    Evaluate(EvaluateArgs),
    /// Leave-one-insertion-out evaluation over a set of sequences.
    Loo(LooArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory for the sequence files.
    #[arg(long)]
    out: PathBuf,
    /// Number of insertion sequences.
    #[arg(long)]
    insertions: Option<usize>,
    /// Frames per sequence.
    #[arg(long)]
    frames: Option<usize>,
    /// Master seed; each insertion derives its own stream from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Deformation coupling strength in [0, 1].
    #[arg(long)]
    kappa: Option<f64>,
    /// Coupling decay length, mm.
    #[arg(long)]
    lambda: Option<f64>,
    /// Scope point noise sigma, mm.
    #[arg(long)]
    noise_scope: Option<f64>,
    /// Marker noise sigma, mm.
    #[arg(long)]
    noise_marker: Option<f64>,
    /// Colon markers per frame.
    #[arg(long)]
    markers: Option<usize>,
    /// Scope points per frame.
    #[arg(long)]
    scope_points: Option<usize>,
}

#[derive(Args, Clone)]
struct ForestFlags {
    /// Trees per marker forest.
    #[arg(long)]
    n_trees: Option<usize>,
    /// Minimum samples per leaf.
    #[arg(long)]
    min_samples_leaf: Option<usize>,
    /// Candidate features per split (default: ceil(D/3)).
    #[arg(long)]
    mtry: Option<usize>,
    /// Maximum tree depth (default: unlimited).
    #[arg(long)]
    max_depth: Option<usize>,
    /// Train every tree on the full set instead of bootstrap resamples.
    #[arg(long)]
    no_bootstrap: bool,
    /// Training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Center scope features on their centroid before training.
    #[arg(long)]
    center_features: bool,
}

impl ForestFlags {
    fn overrides(&self) -> ForestOverrides {
        ForestOverrides {
            n_trees: self.n_trees,
            min_samples_leaf: self.min_samples_leaf,
            mtry: self.mtry,
            max_depth: self.max_depth,
            no_bootstrap: self.no_bootstrap,
            seed: self.seed,
            center_features: self.center_features,
        }
    }
}

#[derive(Args, Clone)]
struct IcpFlags {
    /// ICP iteration budget.
    #[arg(long)]
    icp_max_iterations: Option<usize>,
    /// ICP convergence tolerance, mm of RMSD improvement.
    #[arg(long)]
    icp_tol: Option<f64>,
}

impl IcpFlags {
    fn overrides(&self) -> IcpOverrides {
        IcpOverrides {
            max_iterations: self.icp_max_iterations,
            convergence_tol: self.icp_tol,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    forest: ForestFlags,
    #[command(flatten)]
    icp: IcpFlags,
    /// Training sequence files.
    #[arg(required = true)]
    sequences: Vec<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Input sequence file (ground truth optional).
    #[arg(long)]
    sequence: PathBuf,
    /// Output estimates CSV.
    #[arg(long)]
    out: PathBuf,
    /// Smoothing window, frames.
    #[arg(long)]
    window: Option<usize>,
    #[command(flatten)]
    icp: IcpFlags,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Ground-truth sequence file.
    #[arg(long)]
    sequence: PathBuf,
    /// Write the full report (with per-frame trace) here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Smoothing window, frames.
    #[arg(long)]
    window: Option<usize>,
    #[command(flatten)]
    icp: IcpFlags,
}

#[derive(Args)]
struct LooArgs {
    /// Output directory for fold artifacts and the summary.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    forest: ForestFlags,
    /// Smoothing window, frames.
    #[arg(long)]
    window: Option<usize>,
    #[command(flatten)]
    icp: IcpFlags,
    /// Sequence files, one fold per file.
    #[arg(required = true)]
    sequences: Vec<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = load_file_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(args) => {
            let settings = resolve_simulate(
                &file.simulate,
                &SimulateOverrides {
                    insertions: args.insertions,
                    frames: args.frames,
                    seed: args.seed,
                    kappa: args.kappa,
                    lambda: args.lambda,
                    noise_scope: args.noise_scope,
                    noise_marker: args.noise_marker,
                    markers: args.markers,
                    scope_points: args.scope_points,
                },
            );
            commands::cmd_simulate(&settings, &args.out)
        }
        Command::Train(args) => {
            let (params, center) = resolve_forest(&file.forest, &args.forest.overrides());
            let icp = resolve_icp(&file.icp, &args.icp.overrides())?;
            commands::cmd_train(&args.sequences, &params, center, &icp, &args.out)
        }
        Command::Estimate(args) => {
            let smoother = resolve_smoother(&file.smoother, args.window);
            let icp = resolve_icp(&file.icp, &args.icp.overrides())?;
            commands::cmd_estimate(&args.model, &args.sequence, &smoother, &icp, &args.out)
        }
        Command::Evaluate(args) => {
            let smoother = resolve_smoother(&file.smoother, args.window);
            let icp = resolve_icp(&file.icp, &args.icp.overrides())?;
            commands::cmd_evaluate(
                &args.model,
                &args.sequence,
                &smoother,
                &icp,
                args.report.as_deref(),
            )
            .map(|_| ())
        }
        Command::Loo(args) => {
            let (params, center) = resolve_forest(&file.forest, &args.forest.overrides());
            let smoother = resolve_smoother(&file.smoother, args.window);
            let icp = resolve_icp(&file.icp, &args.icp.overrides())?;
            commands::cmd_loo(&args.sequences, &params, center, &smoother, &icp, &args.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
