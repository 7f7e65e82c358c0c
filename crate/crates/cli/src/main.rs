//! `hyperspread`: simulate and analyse spreading scenarios from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hyperspread::scenario::Regime;
use hyperspread::Error;

#[derive(Debug, Parser)]
#[command(name = "hyperspread", version, about = "SIS/SIWS spreading on directed hypergraphs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Master seed; overrides the scenario's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Final time; overrides the scenario's integrator setting.
    #[arg(long, global = true)]
    pub t_end: Option<f64>,
    /// Ensemble size or number of multistart points.
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Target regime for `gen`: r0<1, r0>1 or bistable.
    #[arg(long, global = true)]
    pub regime: Option<Regime>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the mean-field ODE from the scenario's initial states.
    Simulate,
    /// Healthy-state verdicts and existence tests.
    Classify,
    /// Multistart equilibrium search with stability classification.
    Equilibria,
    /// Healthy, dominant and coexistence analysis of a two-virus scenario.
    Bivirus,
    /// Scale the pairwise and/or higher-order rates over a grid and report equilibria.
    Sweep(SweepArgs),
    /// Compare a stochastic ensemble with the mean-field ODE.
    Validate(ValidateArgs),
    /// Generate a random scenario, optionally searching seeds for a regime.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Part {
    Pair,
    Higher,
    Both,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Which rates the factor multiplies.
    #[arg(long, value_enum, default_value_t = Part::Higher)]
    pub part: Part,
    #[arg(long, default_value_t = 0.0)]
    pub from: f64,
    #[arg(long, default_value_t = 2.0)]
    pub to: f64,
    /// Number of grid points, endpoints included.
    #[arg(long, default_value_t = 41)]
    pub steps: usize,
    /// Virus to sweep (1-based).
    #[arg(long, default_value_t = 1)]
    pub virus: usize,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Initial infection probability of every node when the scenario has random initial states.
    #[arg(long, default_value_t = 0.3)]
    pub p0: f64,
    /// Sampling interval of the output grid.
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 1)]
    pub viruses: usize,
    /// Upper end of the infection and contamination rate range.
    #[arg(long, default_value_t = 0.2)]
    pub infection_max: f64,
    /// Upper end of the higher-order rate range.
    #[arg(long, default_value_t = 0.2)]
    pub higher_max: f64,
    /// Seeds tried when searching for `--regime`.
    #[arg(long, default_value_t = 10_000)]
    pub max_tries: usize,
}

/// Exit code for command-line usage errors.
const USAGE: u8 = 64;

fn exit_code(e: &Error) -> u8 {
    if e.is_assumption() {
        2
    } else if e.is_numerical() {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
