//! Thin wrapper over [`ratesplit::experiments`]: parse flags, run, write.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ratesplit::experiments::{
    load_config, run_experiment, write_output, OutputFormat, Overrides,
};

#[derive(Parser)]
#[command(name = "rs-sim", version, about = "Seeded Monte Carlo experiments for rate splitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment a config file describes and write its result table.
    Run {
        /// Config file: one key=value per line, `#` comments.
        config: PathBuf,
        /// Master seed; beats the config file and the RS_SIM_SEED variable.
        #[arg(long)]
        seed: Option<u64>,
        /// Monte Carlo trials per point; beats the config file.
        #[arg(long)]
        trials: Option<usize>,
        /// Result file; beats the config file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Result layout: csv or json; beats the config file.
        #[arg(long)]
        format: Option<OutputFormat>,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let Command::Run { config, seed, trials, out, format } = Cli::parse().command;
    let overrides = Overrides { seed, trials, out, format };
    let outcome = load_config(&config, &overrides)
        .and_then(|config| run_experiment(&config).map(|table| (config, table)))
        .and_then(|(config, table)| write_output(&config, &table));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rs-sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
