//! `pcnroute`: command-line front end of the payment-channel routing simulator.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::run::CliError;

#[derive(Debug, Parser)]
#[command(name = "pcnroute", version, about = "Payment-channel network routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a config entry; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory (default: output.dir, then $PCNROUTE_OUT, then ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for every random stream; overrides sim.seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation and write metrics, series and final state.
    Simulate(Common),
    /// Run every point of the sweep.* grid and write a tidy CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Runs executed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Solve the fluid throughput program and write path rates and duals.
    FluidSolve(Common),
    /// Decide whether the demand lies in the capacity region.
    CheckCapacity(Common),
    /// Write a generated topology, demand and a config that uses them.
    GenWorkload(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(c) => run::simulate(&c),
        Command::Sweep { common, jobs } => run::sweep(&common, jobs),
        Command::FluidSolve(c) => run::fluid_solve(&c),
        Command::CheckCapacity(c) => run::check_capacity(&c),
        Command::GenWorkload(c) => run::gen_workload(&c),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 1,
                CliError::Data(_) => 2,
            })
        }
    }
}
