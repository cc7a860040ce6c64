//! `rvemor`: offline and online stages of the reduced-order RVE pipeline.

mod commands;
mod config;
mod error;
mod manifest;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "rvemor", version, about = "Reduced-order RVE simulations with a recurrent coefficient surrogate")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the loading and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `paths.data`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for batch simulations and element loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full-order simulations of the training and validation paths, and the snapshot store.
    Dns,
    /// POD basis from the stored snapshots.
    PodBuild,
    /// Galerkin-reduced simulations of all paths; their coefficients are the training targets.
    PodRun,
    /// Trains the coefficient network.
    Train,
    /// Equation-free online simulations of the validation paths.
    RnnRun,
    /// Error report and timing table against MOR and DNS.
    Compare,
    /// Trains one network per layer-width combination and tabulates the losses.
    Sweep,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let out = cli.out.clone().unwrap_or_else(|| config.paths.data.clone());
    let mut ctx = Context::new(config, out)?;
    match cli.command {
        Command::Dns => commands::cmd_dns(&mut ctx),
        Command::PodBuild => commands::cmd_pod_build(&mut ctx),
        Command::PodRun => commands::cmd_pod_run(&mut ctx),
        Command::Train => commands::cmd_train(&mut ctx),
        Command::RnnRun => commands::cmd_rnn_run(&mut ctx),
        Command::Compare => commands::cmd_compare(&mut ctx),
        Command::Sweep => commands::cmd_sweep(&mut ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
