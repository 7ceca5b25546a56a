//! `cogsim`: simulate and analyze cooperative relaying protocols for a
//! two-pair cognitive radio network over broadcast erasure channels.
//!
//! Exit codes: 0 on success, 2 when a validation check fails or the
//! dominance sampler finds a violation, 3 on configuration errors.

use std::process::ExitCode;

use clap::Parser;

mod commands;
mod output;
mod pool;
mod scenario;

#[derive(Debug, Parser)]
#[command(
    name = "cogsim",
    version,
    about = "Slotted-time simulator and analytic verifier for cooperative \
             cognitive-radio MAC protocols",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Subcommand)]
enum Command {
    /// Run simulations and report full per-run metrics.
    Simulate(commands::simulate::Args),
    /// Compute analytic stable-throughput regions.
    Region(commands::region::Args),
    /// Sweep parameter grids and emit one flat row per run.
    Sweep(commands::sweep::Args),
    /// Cross-check simulator behavior against the analytic model.
    Validate(commands::validate::Args),
    /// Sample the coupled direct/relayed service laws and test dominance.
    Dominance(commands::dominance::Args),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Region(args) => commands::region::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
        Command::Validate(args) => commands::validate::run(args),
        Command::Dominance(args) => commands::dominance::run(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("cogsim: error: {err:#}");
            ExitCode::from(3)
        }
    }
}
