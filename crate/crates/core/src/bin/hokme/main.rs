//! `hokme`: batch front-end for data generation, Gram fields, MMDs, tests,
//! conditional independence, kPC and distribution regression.
//!
//! Exit status: 0 on success, 2 for invalid input or configuration, 3 for a
//! numerical failure. Diagnostics go to standard error.

mod commands;
mod opts;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use opts::Opts;

#[derive(Parser)]
#[command(name = "hokme", version, about = "Higher-order kernel mean embeddings of stochastic processes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset.
    Gen(Opts),
    /// Compute and cache a Gram field.
    Gram(Opts),
    /// Estimate an MMD of the given order.
    Mmd(Opts),
    /// Permutation two-sample test.
    Test2(Opts),
    /// Conditional-independence statistic and decision.
    Ci(Opts),
    /// kPC skeleton over several variables.
    Kpc(Opts),
    /// Fit a distribution-regression model.
    DrFit(Opts),
    /// Predict with a fitted distribution-regression model.
    DrPredict(Opts),
}

fn run(cmd: Cmd) -> hokme::Result<()> {
    let (opts, f): (Opts, fn(&Opts) -> hokme::Result<()>) = match cmd {
        Cmd::Gen(o) => (o, commands::gen),
        Cmd::Gram(o) => (o, commands::gram),
        Cmd::Mmd(o) => (o, commands::mmd),
        Cmd::Test2(o) => (o, commands::test2),
        Cmd::Ci(o) => (o, commands::ci),
        Cmd::Kpc(o) => (o, commands::kpc),
        Cmd::DrFit(o) => (o, commands::dr_fit),
        Cmd::DrPredict(o) => (o, commands::dr_predict),
    };
    let opts = opts.resolve()?;
    if let Some(n) = opts.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| hokme::Error::InvalidArgument(format!("threads: {e}")))?;
    }
    f(&opts)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hokme: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
