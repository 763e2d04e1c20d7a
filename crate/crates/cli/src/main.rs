//! `hipster`: command-line experiments on hipster random walks.
//!
//! Exit codes: 0 success, 1 runtime error, 2 configuration error, 3 a check failed.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CoupleFlags, EntropyFlags, EvolveFlags, ExploreFlags, SchemeFlags, SimulateFlags, TheoremFlags};
use config::{ConfigFile, Globals};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
    Assertion(Vec<String>),
}

impl From<hipster_core::Error> for Failure {
    fn from(e: hipster_core::Error) -> Self {
        use hipster_core::Error as E;
        match e {
            E::Io(_) | E::Csv(_) | E::Json(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hipster", version, about = "Hipster random walks: exact laws, schemes, couplings")]
struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $HIPSTER_OUT_DIR or ./hipster-out).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve a law through the exact recursion.
    Evolve(EvolveFlags),
    /// Sample root values of random recursive trees.
    Simulate(SimulateFlags),
    /// Run the finite-difference scheme from a self-similar profile.
    Scheme(SchemeFlags),
    /// Check entropy inequalities and L¹ convergence of the scheme.
    Entropy(EntropyFlags),
    /// Test the order-preserving couplings on random inputs.
    Couple(CoupleFlags),
    /// Study the min-plus and lattice recursions.
    Explore(ExploreFlags),
    /// Beta(2,1) limit of the totally asymmetric walk.
    Theorem1(TheoremFlags),
    /// Beta(2,2) limit of the symmetric walk.
    Theorem2(TheoremFlags),
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let g = Globals::resolve(&file, cli.seed, cli.threads, cli.out_dir)?;
    if let Some(t) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match &cli.command {
        Command::Evolve(f) => commands::evolve_cmd(&file, &g, f),
        Command::Simulate(f) => commands::simulate_cmd(&file, &g, f),
        Command::Scheme(f) => commands::scheme_cmd(&file, &g, f),
        Command::Entropy(f) => commands::entropy_cmd(&file, &g, f),
        Command::Couple(f) => commands::couple_cmd(&file, &g, f),
        Command::Explore(f) => commands::explore_cmd(&file, &g, f),
        Command::Theorem1(f) => commands::theorem_cmd(&file, &g, f, false),
        Command::Theorem2(f) => commands::theorem_cmd(&file, &g, f, true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Assertion(failed)) => {
            eprintln!("failed checks: {}", failed.join(", "));
            ExitCode::from(3)
        }
    }
}
