//! `smoothlab` command-line entry point.
//!
//! Exit codes: 0 on success, 1 when a run fails or a gated check does not
//! pass, 2 on usage errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "smoothlab", version, about = "Over-smoothing laboratory for deep graph networks")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check closed forms against direct iteration and run the lemma suites.
    Verify(VerifyArgs),
    /// Train one model per requested depth.
    Train(RunArgs),
    /// Depth sweep over residual kinds and seeds.
    Sweep(RunArgs),
    /// Per-layer and per-degree-group SMV over a grid of depths.
    Smooth(RunArgs),
    /// Oscillation of products of row-stochastic operators.
    Converge(ConvergeArgs),
    /// Train PSNR models and tabulate their residual coefficients.
    Coeffs(RunArgs),
    /// Write a synthetic SBM dataset in the three-file format.
    Gen(GenArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory for CSV artifacts.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Root seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Args, Debug, Clone)]
pub struct SbmArgs {
    /// Generate an SBM with BLOCKS x SIZE nodes.
    #[arg(long, value_name = "AxB")]
    pub sbm: Option<String>,
    #[arg(long)]
    pub p_in: Option<f64>,
    #[arg(long)]
    pub p_out: Option<f64>,
    #[arg(long)]
    pub feat_dim: Option<usize>,
    #[arg(long)]
    pub feat_shift: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Largest graph size.
    #[arg(long, default_value_t = 12)]
    pub n: usize,
    /// Largest propagation order.
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Largest feature width.
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    /// Random instances per closed form.
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    /// Random draws per lemma.
    #[arg(long, default_value_t = 200)]
    pub lemma_draws: usize,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sbm: SbmArgs,
    /// Flat key = value experiment file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory holding edges.tsv, features.csv and labels.txt.
    #[arg(long, value_name = "DIR", conflicts_with = "sbm")]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_name = "CSV-list")]
    pub depths: Option<String>,
    #[arg(long, value_name = "CSV-list")]
    pub seeds: Option<String>,
    /// none, res, init-res, dense, jk, jk-maxpool or psnr; sweeps accept a list.
    #[arg(long)]
    pub residual: Option<String>,
    /// Initial-residual weight.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// PSNR posterior encoder: gcn, gat or sage.
    #[arg(long)]
    pub encoder: Option<String>,
    /// gcn or gat.
    #[arg(long)]
    pub backbone: Option<String>,
    /// Zero validation and test features.
    #[arg(long)]
    pub missing: bool,
    /// per-class:A,B,C or fractional:A,B,C.
    #[arg(long)]
    pub split: Option<String>,
    /// Depths of the smoothness study.
    #[arg(long, value_name = "CSV-list")]
    pub layers_grid: Option<String>,
    #[arg(long)]
    pub eval_draws: Option<usize>,
    /// Learning-rate grid.
    #[arg(long, value_name = "CSV-list")]
    pub lr: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Use this dataset's graph instead of a random one.
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Nodes of the random connected graph.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Edge probability of the random graph.
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    #[arg(long, default_value_t = 30)]
    pub k_max: usize,
    #[arg(long, default_value_t = 0.5)]
    pub eps_low: f64,
    #[arg(long, default_value_t = 4)]
    pub feat_dim: usize,
    #[arg(long, value_name = "CSV-list", default_value = "0")]
    pub seeds: String,
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sbm: SbmArgs,
}

/// A failure that maps to a specific exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

impl From<smoothlab::Error> for Failure {
    fn from(e: smoothlab::Error) -> Self {
        Failure::Run(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match commands::run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("smoothlab: one or more checks failed");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("smoothlab: {msg}\n\nRun `smoothlab --help` for usage.");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("smoothlab: {e:#}");
            ExitCode::from(1)
        }
    }
}
