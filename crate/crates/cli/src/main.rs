use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use noncrit::harness::{self, ExperimentConfig, OUTPUT_ROOT_ENV};

/// Sandpile and avalanche experiments with sinks and sources.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Directory that relative output directories are resolved against.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV, default_value = ".")]
    output_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// List the named experiments.
    List,
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// Write the toppling matrices and edge lists of a config's volumes.
    ExportMatrix { config: PathBuf },
}

fn load(path: &PathBuf) -> anyhow::Result<ExperimentConfig> {
    ExperimentConfig::from_path(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Run { config } => {
            let config = load(config)?;
            let report = harness::run_in(&config, &cli.output_root)?;
            for c in &report.checks {
                println!("{:<13} {}: {}", c.status.label(), c.name, c.detail);
            }
            println!(
                "{} in {:.1}s, outputs in {}",
                report.status.label(),
                report.wall_time_secs,
                report.dir.display()
            );
            Ok(report.exit_code() as u8)
        }
        Command::List => {
            for e in harness::list_experiments() {
                println!("{:<4} {}  [{}]", e.id, e.title, e.anchor);
            }
            Ok(0)
        }
        Command::Validate { config } => {
            let config = load(config)?;
            println!("ok: {} (seed {})", config.experiment.id(), config.seed);
            Ok(0)
        }
        Command::ExportMatrix { config } => {
            let config = load(config)?;
            for path in harness::export_matrix(&config, &cli.output_root)? {
                println!("{}", path.display());
            }
            Ok(0)
        }
    }
}
