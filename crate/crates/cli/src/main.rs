//! `patdet`: batch front end for the photon-assisted-tunneling detector model.
//!
//! Each subcommand reads one TOML scenario and writes tab-separated tables
//! into the output directory. Exit codes: 0 success, 2 configuration or
//! input error, 3 numerical failure.

mod commands;
mod config;
mod error;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "patdet", version, about = "Photon-assisted-tunneling detector model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resonator mode table from the [line] section.
    Modes(Common),
    /// Quasiparticle current of the junction over the [iv] bias range.
    Iv(Common),
    /// Reflection |S11|² against bias and probe frequency.
    Spectroscopy(Common),
    /// Photo-assisted current of each step against source power.
    Sweep(Common),
    /// Current against bath temperature, with the dark-current offset.
    Thermal(Common),
    /// Fit the line attenuation to measured power sweeps.
    Calibrate(Common),
    /// Steady state of the driven master equation at one operating point.
    Steady(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the `seed` of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    threads: Option<usize>,
}

type Task = fn(&config::Loaded, &mut commands::Output) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let (name, common, task): (&'static str, &Common, Task) = match &cli.command {
        Command::Modes(c) => ("modes", c, commands::modes),
        Command::Iv(c) => ("iv", c, commands::iv),
        Command::Spectroscopy(c) => ("spectroscopy", c, commands::spectroscopy),
        Command::Sweep(c) => ("sweep", c, commands::sweep),
        Command::Thermal(c) => ("thermal", c, commands::thermal),
        Command::Calibrate(c) => ("calibrate", c, commands::calibrate),
        Command::Steady(c) => ("steady", c, commands::steady),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let loaded = config::load(&common.config, common.seed)?;
    let mut out = commands::Output::new(&common.out, name, &loaded.config)?;
    task(&loaded, &mut out)?;
    Ok(out.written)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("patdet: {e}");
            e.exit_code()
        }
    }
}
