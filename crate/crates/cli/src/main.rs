use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use raceway_cli::{run_experiment, ExperimentConfig, Experiment, RunError};

/// Raceway pond topography optimization.
#[derive(Parser)]
#[command(name = "raceway", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one shape and write its profiles.
    Simulate(Common),
    /// Gradient ascent from the configured shape.
    Optimize(Common),
    /// Compare adjoint and finite-difference gradients on random shapes.
    Gradcheck(Common),
    /// Objective against the number of trajectories.
    #[command(name = "sweep-nz")]
    SweepNz(Common),
    /// Optimal objective against the Fourier truncation order.
    #[command(name = "sweep-n", alias = "sweep-N")]
    SweepN(Common),
    /// Multi-lap optimization with the paddle wheel.
    Paddle(Common),
    /// Loading-weighted objective with the mean depth as a design variable.
    Areal(Common),
    /// Optimal shapes for different prescribed inlet states.
    #[command(name = "c0-study")]
    C0Study(Common),
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> Result<(), RunError> {
    let (exp, common) = match cli.command {
        Command::Simulate(c) => (Experiment::Simulate, c),
        Command::Optimize(c) => (Experiment::Optimize, c),
        Command::Gradcheck(c) => (Experiment::Gradcheck, c),
        Command::SweepNz(c) => (Experiment::SweepNz, c),
        Command::SweepN(c) => (Experiment::SweepN, c),
        Command::Paddle(c) => (Experiment::Paddle, c),
        Command::Areal(c) => (Experiment::Areal, c),
        Command::C0Study(c) => (Experiment::C0Study, c),
    };
    let mut cfg = ExperimentConfig::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let manifest = run_experiment(exp, &cfg, &common.out)?;
    for f in &manifest.files {
        println!("{}", common.out.join(f).display());
    }
    if let Some(t) = &manifest.termination {
        println!("termination: {t}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("raceway: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
