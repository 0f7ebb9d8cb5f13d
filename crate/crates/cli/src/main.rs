//! `mchoeff`: deviation bounds, inversions, spectral gaps, exact verification suites and
//! Monte Carlo tail experiments for Markov chains.
//!
//! Exit status: 0 success, 1 a checked inequality failed, 2 invalid input,
//! 3 assumption violated (no spectral gap, reducible chain), 4 numerical failure.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use markov_hoeffding::ErrorClass;

use args::{Cli, Command};

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// A bound or lemma was contradicted by an exact or Monte Carlo computation.
    Falsified,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let class = err
        .chain()
        .find_map(|e| e.downcast_ref::<markov_hoeffding::Error>())
        .map(|e| e.class())
        .unwrap_or(ErrorClass::Validation);
    class_code(class)
}

pub fn class_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Validation => 2,
        ErrorClass::AssumptionViolated => 3,
        ErrorClass::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Bound(a) => commands::bound(a, cli.json),
        Command::InvertN(a) => commands::invert_n(a, cli.json),
        Command::InvertEps(a) => commands::invert_eps(a, cli.json),
        Command::Gap(a) => commands::gap(a, cli.json),
        Command::Verify(a) => commands::verify(a),
        Command::Simulate(a) => commands::simulate(a, cli.json),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Falsified) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
