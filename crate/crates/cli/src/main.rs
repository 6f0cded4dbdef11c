use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ihte_cli::output::Bundle;
use ihte_cli::{ingest, run, CliError, ExperimentConfig};

/// Phase reconstruction experiments with iterated Hilbert transform embeddings.
#[derive(Parser)]
#[command(name = "ihte", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the forced oscillator and write the trajectory and signal.
    Simulate(Common),
    /// Simulate, reconstruct the phase and score every iteration.
    Reconstruct(Common),
    /// Reconstruct, then estimate the coupling function and response curve.
    Prc(Common),
    /// Reconstruct once per sweep point and merge the errors.
    Sweep(Common),
    /// Reconstruct the phase of a signal read from a CSV file.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// CSV with a column `x` or columns `t,x`.
        #[arg(long)]
        input: PathBuf,
        /// Sampling step; required for single-column input.
        #[arg(long)]
        dt: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML); defaults are used without one.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set oscillator.r=3.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output root, replacing `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path, &self.set)?,
            None => ExperimentConfig::from_toml("", &self.set)?,
        };
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        Ok(cfg)
    }
}

fn configure_workers() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("IHTE_WORKERS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("IHTE_WORKERS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(format!("IHTE_WORKERS: {e}")))
}

fn execute(cli: Cli) -> Result<PathBuf, CliError> {
    configure_workers()?;
    let (name, common) = match &cli.command {
        Command::Simulate(c) => ("simulate", c),
        Command::Reconstruct(c) => ("reconstruct", c),
        Command::Prc(c) => ("prc", c),
        Command::Sweep(c) => ("sweep", c),
        Command::Ingest { common, .. } => ("ingest", common),
    };
    let cfg = common.load()?;
    let mut bundle = Bundle::new(name, &cfg);
    let files = match &cli.command {
        Command::Simulate(_) => run::run_simulate(&cfg)?,
        Command::Reconstruct(_) => run::run_reconstruct(&cfg)?,
        Command::Prc(_) => run::run_prc(&cfg)?,
        Command::Sweep(_) => run::run_sweep(&cfg)?,
        Command::Ingest { input, dt, .. } => {
            let x = ingest::ingest_signal(input, *dt)?;
            bundle.record_input(input)?;
            run::run_ingested(&cfg, &x)?
        }
    };
    bundle.commit(&files)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
