//! `hotda`: generate datasets, cluster, adapt and benchmark from the shell.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod adapt;
mod benchmark;
mod cluster;
mod config;
mod gen;
mod output;
mod svg;

use config::{FileConfig, SolverFlags};

/// A problem with the invocation rather than with the data; exits with 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "hotda", version, about = "Hierarchical optimal transport for unsupervised domain adaptation")]
struct Cli {
    /// TOML file supplying any flag by its long name; command-line values win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Entropic regularization ε of the problem between structures.
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Entropic regularization ε′ of the problems between points.
    #[arg(long = "eps-inner", global = true)]
    eps_inner: Option<f64>,
    /// Clustering kernel width: `auto`, `median` or a positive number.
    #[arg(long, global = true)]
    sigma: Option<String>,
    /// Marginal violation at which Sinkhorn stops.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Sinkhorn iteration budget.
    #[arg(long = "max-iter", global = true, value_name = "N")]
    max_iter: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Gen(gen::GenArgs),
    /// Cluster points with Wasserstein-spectral clustering.
    Cluster(cluster::ClusterArgs),
    /// Adapt a labeled source to an unlabeled target and predict target labels.
    Adapt(adapt::AdaptArgs),
    /// Rotated-moons benchmark over a grid of angles.
    BenchmarkMoons(benchmark::BenchmarkArgs),
}

/// Everything a subcommand needs besides its own arguments.
pub struct Context {
    pub file: FileConfig,
    pub solver: config::Solver,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let flags = SolverFlags {
        eps: cli.eps,
        eps_inner: cli.eps_inner,
        tolerance: cli.tolerance,
        max_iter: cli.max_iter,
        sigma: cli.sigma.clone(),
        seed: cli.seed,
    };
    let solver = flags.resolve(&file)?;
    if let Some(jobs) = cli.jobs.or(file.jobs) {
        if jobs == 0 {
            return Err(UsageError("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let ctx = Context { file, solver };
    match cli.command {
        Command::Gen(args) => gen::run(&args, &ctx),
        Command::Cluster(args) => cluster::run(&args, &ctx),
        Command::Adapt(args) => adapt::run(&args, &ctx),
        Command::BenchmarkMoons(args) => benchmark::run(&args, &ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
