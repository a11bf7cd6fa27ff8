use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nlfpca::commands;
use nlfpca::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "nlfpca",
    version,
    about = "Nonlinear functional PCA experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or import and split) the replicate datasets
    Simulate(Common),
    /// Write B-spline coefficients and smoothed curves for every replicate
    Smooth(Common),
    /// Fit the configured method on every replicate
    Train(Common),
    /// Score saved models on the train and test splits
    Evaluate(Common),
    /// Fit and score over a grid of (L, J, K)
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override a config field, e.g. `--set hidden=30` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> nlfpca::Result<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        if let Some(dir) = &self.out_dir {
            overrides.push(format!(
                "out_dir={}",
                toml::Value::String(dir.display().to_string())
            ));
        }
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

fn run(cli: Cli) -> nlfpca::Result<()> {
    match cli.command {
        Command::Simulate(c) => print!(
            "{}",
            commands::manifest(&commands::simulate(&c.resolve()?)?)
        ),
        Command::Smooth(c) => print!("{}", commands::manifest(&commands::smooth(&c.resolve()?)?)),
        Command::Train(c) => print!("{}", commands::manifest(&commands::train(&c.resolve()?)?)),
        Command::Evaluate(c) => print!("{}", commands::evaluate(&c.resolve()?)?.render()),
        Command::Sweep(c) => print!(
            "{}",
            commands::render_sweep(&commands::sweep(&c.resolve()?)?)
        ),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
