//! `nvf`: vector-field surface reconstruction pipeline.
//!
//! Subcommands: `oracle` (ground-truth field dumps), `train`, `extract`,
//! `eval`, `bench`, `fixtures`. Exit codes: 0 success, 1 usage error,
//! 2 data error, 3 numerical failure.

mod commands;
mod manifest;
mod util;

use clap::{Parser, Subcommand};
use nvf_core::error::NvfError;

#[derive(Parser)]
#[command(name = "nvf", version, about = "Vector-field surface reconstruction")]
struct Cli {
    /// Worker threads (0 = all cores); 1 forces fully serial execution.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label queries against the exact nearest-point oracle and write a
    /// binary field dump.
    Oracle(commands::oracle::OracleArgs),
    /// Train a model and write a checkpoint plus a CSV log.
    Train(Box<commands::train::TrainArgs>),
    /// Extract a mesh from a trained model, differentiation-free.
    Extract(commands::extract::ExtractArgs),
    /// Compare a reconstruction against ground truth (CD, EMD, F-score).
    Eval(commands::eval::EvalArgs),
    /// Time vector-field inference against the finite-difference baseline.
    Bench(commands::bench::BenchArgs),
    /// Write the analytic fixture meshes.
    Fixtures(commands::fixtures::FixturesArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };

    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }

    let result = match cli.command {
        Command::Oracle(args) => commands::oracle::run(args),
        Command::Train(args) => commands::train::run(*args),
        Command::Extract(args) => commands::extract::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Bench(args) => commands::bench::run(args),
        Command::Fixtures(args) => commands::fixtures::run(args),
    };

    if let Err(e) = result {
        eprintln!("error: {e}");
        let code = match e {
            NvfError::Numerical(_) => 3,
            _ => 2,
        };
        std::process::exit(code);
    }
}
