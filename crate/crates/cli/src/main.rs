//! `ltlab`: command-line driver for the finite-rank Lieb-Thirring / CLR lab.

mod commands;
mod config;
mod envelope;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "ltlab", version, about = "Finite-rank Lieb-Thirring and CLR constants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Self-consistent optimisation of the finite-rank quotient.
    Optimize(OptimizeArgs),
    /// KdV N-soliton profile, exact vs computed spectrum, and the 3/2 quotient.
    Kdv(KdvArgs),
    /// Birman-Schwinger levels and critical CLR estimates (d >= 3).
    Clr(ClrArgs),
    /// Grid of optimize runs over gamma, dim and nstates.
    Sweep(SweepArgs),
    /// Run the acceptance checks.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML or JSON file with defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (defaults to $LTLAB_OUTPUT_DIR/<command> if set).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ScfFlags {
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Half-width of the line box, or outer radius of the radial grid.
    #[arg(long = "box")]
    pub box_size: Option<f64>,
    #[arg(long)]
    pub lmax: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Fixed-point tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Initial profile, e.g. gaussian, gaussian:3, bumps:2,6, random, file:v.csv.
    #[arg(long)]
    pub init: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub nstates: Option<usize>,
    #[command(flatten)]
    pub scf: ScfFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct KdvArgs {
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub betas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub shifts: Option<Vec<f64>>,
    /// Rescale onto the manifold sum(beta^3) = 3/16.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long = "box")]
    pub box_size: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct ClrArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    /// Potential descriptor, e.g. sobolev, vl:1, random, file:v.csv.
    #[arg(long)]
    pub potential: Option<String>,
    /// Number of levels mu_j to compute (default d+2).
    #[arg(long)]
    pub nstates: Option<usize>,
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long = "box")]
    pub box_size: Option<f64>,
    #[arg(long)]
    pub lmax: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub dim: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub nstates: Option<Vec<usize>>,
    #[command(flatten)]
    pub scf: ScfFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    /// Only the sub-minute subset.
    #[arg(long)]
    pub quick: bool,
    #[command(flatten)]
    pub common: Common,
}

/// How a successful command ended.
pub enum Outcome {
    Done,
    NotConverged,
    Failed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match &cli.command {
        Command::Optimize(a) => commands::optimize(a),
        Command::Kdv(a) => commands::kdv(a),
        Command::Clr(a) => commands::clr(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("ltlab: iteration did not converge");
            ExitCode::from(2)
        }
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("ltlab: error: {msg}");
            ExitCode::from(1)
        }
    }
}
