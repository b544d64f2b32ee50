//! The `boed` command line: train agents, evaluate bounds, run the
//! one-dimensional myopic/non-myopic comparison, time deployment and serve
//! sessions over HTTP.

pub mod bench;
pub mod config;
pub mod eval;
pub mod toy1d;
pub mod train;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use boed_core::models::ModelId;
use boed_core::sedmdp::RewardMode;
use boed_core::trainer::Profile;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad config documents or contradictory options.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub(crate) fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "boed", version, about = "Sequential Bayesian experimental design with reinforcement learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a design policy and write a checkpoint plus training log.
    Train(TrainArgs),
    /// Estimate sPCE / sNMC bounds for a policy; writes per-rollout and aggregate CSVs.
    Eval(EvalArgs),
    /// Myopic (gamma = 0) versus non-myopic (gamma = 1) agents on the 1-D source problem.
    Toy1d(Toy1dArgs),
    /// Time summary update plus policy forward per proposed design.
    Bench(BenchArgs),
    /// Serve trained policies as live design sessions over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// source, source1d, ces, prey or lingauss.
    #[arg(long)]
    pub model: Option<ModelId>,
    /// paper or desk.
    #[arg(long)]
    pub profile: Option<Profile>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "BOED_OUT", default_value = "boed-out")]
    pub out: PathBuf,
    /// JSON config document; CLI flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// dense or sparse.
    #[arg(long)]
    pub reward: Option<RewardMode>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Contrastive samples L used for the training rewards.
    #[arg(long = "contrastive")]
    pub contrastive: Option<usize>,
    /// Checkpoint path to write (default derived from the run).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Record wall time in the log's `seconds` column (makes the log non-reproducible).
    #[arg(long)]
    pub timing: bool,
    /// Suppress per-row progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// rl (needs --checkpoint), random or myopic-snis.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub rollouts: Option<usize>,
    #[arg(long = "contrastive")]
    pub contrastive: Option<usize>,
    /// Number of experiments per rollout (default: the model's T).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Label for the method column (default: the method name).
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct Toy1dArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub rollouts: Option<usize>,
    #[arg(long = "contrastive")]
    pub contrastive: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Number of timed proposals.
    #[arg(long, default_value_t = 1000)]
    pub proposals: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Directory of checkpoints offered to sessions.
    #[arg(long, env = "BOED_OUT", default_value = "boed-out")]
    pub checkpoints: PathBuf,
    /// Session journal (default: sessions.jsonl inside the checkpoint directory).
    #[arg(long)]
    pub journal: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => train::cmd_train(&args).map(|r| println!("{}", r.summary())),
        Command::Eval(args) => eval::cmd_eval(&args).map(|r| println!("{}", r.summary())),
        Command::Toy1d(args) => toy1d::cmd_toy1d(&args).map(|r| println!("{}", r.summary())),
        Command::Bench(args) => bench::cmd_bench(&args).map(|r| println!("{}", r.summary())),
        Command::Serve(args) => serve(&args),
    }
}

fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let addr: std::net::SocketAddr = args
        .addr
        .parse()
        .map_err(|e| CliError::Usage(format!("--addr {}: {e}", args.addr)))?;
    let journal = args.journal.clone().unwrap_or_else(|| args.checkpoints.join("sessions.jsonl"));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime
        .block_on(boed_service::serve(addr, &args.checkpoints, &journal))
        .map_err(CliError::runtime)
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("creating {}: {e}", dir.display())))
}
