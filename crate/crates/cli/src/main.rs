//! `shiftfunc`: config-driven experiments for bias-reduced estimation of
//! smooth functionals in Gaussian shift models.

mod commands;
mod config;
mod error;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::commands::Run;
use crate::error::CliError;
use crate::output::{resolve_out_dir, Format};

#[derive(Parser)]
#[command(name = "shiftfunc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Master seed (overrides the config's `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    /// Output directory (the SHIFTFUNC_OUT environment variable takes precedence).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated output formats.
    #[arg(long, global = true, value_enum, value_delimiter = ',', default_value = "csv,json")]
    format: Vec<Format>,
}

#[derive(Args)]
struct ConfigArg {
    /// JSON configuration document.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// One outer Monte Carlo experiment.
    Estimate(ConfigArg),
    /// Scaling sweep over σ or d with fitted log-log slopes.
    Sweep(ConfigArg),
    /// KS distance of normalized errors to N(0,1).
    Normtest(ConfigArg),
    /// Packing, bump family and sign-recovery experiment.
    Lowerbound(ConfigArg),
    /// Summarize a JSON output file.
    Report {
        /// A JSON file written by another subcommand.
        file: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, cfg) = match &cli.command {
        Command::Estimate(c) => ("estimate", c),
        Command::Sweep(c) => ("sweep", c),
        Command::Normtest(c) => ("normtest", c),
        Command::Lowerbound(c) => ("lowerbound", c),
        Command::Report { file } => {
            print!("{}", commands::report(file)?);
            return Ok(());
        }
    };
    let run = Run::load(
        name,
        &cfg.config,
        cli.seed,
        resolve_out_dir(cli.out.as_deref()),
        cli.format.clone(),
    )?;
    let start = Instant::now();
    let written = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))?
            .install(|| run.execute())?,
        None => run.execute()?,
    };
    for p in &written {
        eprintln!("wrote {}", p.display());
    }
    eprintln!("wall-clock: {:.3} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
