//! `slipctl`: batch front end for the slip-wall Navier–Stokes control solver.

mod commands;
mod config;
mod expr;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use crate::config::Loaded;

#[derive(Debug, Parser)]
#[command(name = "slipctl", version, about = "Boundary control of 2D Navier–Stokes flow with Navier slip walls")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Solve,
    Optimize,
    GradCheck,
    Verify,
    Lift,
}

/// Failure classes of the exit-code contract.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Solver(String),
    Budget(String),
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Solver(_) => 2,
            Failure::Budget(_) => 3,
            Failure::Check(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Solver(m) | Failure::Budget(m) | Failure::Check(m) => m,
        }
    }
}

fn setup_workers(workers: usize) -> Result<(), Failure> {
    use slipctl_core::exec::{set_execution, Execution};
    if workers == 0 {
        return Err(Failure::Config("--workers must be ≥ 1".into()));
    }
    if workers == 1 {
        set_execution(Execution::Sequential);
        return Ok(());
    }
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
        set_execution(Execution::Parallel);
    }
    #[cfg(not(feature = "parallel"))]
    {
        log::warn!("built without the `parallel` feature; ignoring --workers {workers}");
        set_execution(Execution::Sequential);
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    setup_workers(cli.workers)?;
    let loaded = Loaded::from_file(&cli.config, cli.seed)?;
    let out = cli
        .out
        .clone()
        .or_else(|| loaded.config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("slipctl-out"));
    commands::run(cli.command, &loaded, &out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("slipctl: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
