//! dplab: simulate linear-system trajectories, poison them, screen them with
//! statistical tests, and run the registered experiments.
//!
//! Exit codes: 0 success (and no test rejected), 2 at least one configured
//! test rejected, 1 error.

mod commands;
mod config;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "dplab", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a trajectory and write it as a dataset file.
    Simulate(RunArgs),
    /// Poison a dataset file with a configured attack.
    Attack(RunArgs),
    /// Run configured detection tests on a dataset file.
    Detect(RunArgs),
    /// Run a registered experiment (ex1, ex2, ex3) or a custom pipeline.
    Experiment(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing. Experiments may instead set
    /// output_dir in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed for all randomness in the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for seed-parallel work (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Restore full restart counts where an experiment is scaled down.
    #[arg(long, default_value_t = false)]
    paper_scale: bool,
}

impl RunArgs {
    fn out_dir(&self, fallback: Option<&PathBuf>) -> Result<PathBuf> {
        let dir = match (&self.out, fallback) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => o.clone(),
            (None, None) => anyhow::bail!("--out is required"),
        };
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(dir)
    }
}

fn run(cli: Cli) -> Result<i32> {
    let args = match &cli.cmd {
        Cmd::Simulate(a) | Cmd::Attack(a) | Cmd::Detect(a) | Cmd::Experiment(a) => a,
    };
    if args.jobs > 0 {
        // Ignore the error when a pool already exists (repeat calls in-process).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build_global();
    }
    match &cli.cmd {
        Cmd::Simulate(a) => {
            let cfg = config::load_config(&a.config)?;
            commands::cmd_simulate(&cfg, &a.out_dir(None)?, a.seed)
        }
        Cmd::Attack(a) => {
            let cfg = config::load_config(&a.config)?;
            commands::cmd_attack(&cfg, &a.out_dir(None)?, a.seed, a.paper_scale)
        }
        Cmd::Detect(a) => {
            let cfg = config::load_config(&a.config)?;
            commands::cmd_detect(&cfg, &a.out_dir(None)?)
        }
        Cmd::Experiment(a) => {
            let cfg: config::ExperimentConfig = config::load_config(&a.config)?;
            let out = a.out_dir(cfg.output_dir.as_ref())?;
            experiments::cmd_experiment(&cfg, &out, a.seed, a.paper_scale)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
