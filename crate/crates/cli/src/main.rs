use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndss_cli::commands::{self, InferCommand, MetricsCommand, ReproduceArgs, ScenarioArgs};
use ndss_cli::{CliResult, ExperimentKind};

/// Inference and secrecy experiments on networked dynamical systems.
#[derive(Debug, Parser)]
#[command(name = "ndss", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario; prints the trajectory or writes it to --out.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an inference attack.
    Infer {
        #[command(subcommand)]
        what: InferCommand,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Run the scenario's noise-injection defense.
    Defend {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Secrecy and cost metrics.
    Metrics {
        #[command(subcommand)]
        what: MetricsCommand,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Regenerate one of the study CSVs.
    Reproduce(ReproduceArgs),
    /// Check a scenario or experiment spec file.
    Validate {
        path: PathBuf,
        /// Treat the file as an experiment spec of this kind.
        #[arg(long, value_enum)]
        kind: Option<ExperimentKind>,
    },
}

fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Simulate { scenario, out } => commands::simulate(&scenario, out.as_deref()),
        Command::Infer { what, out } => commands::infer(&what, out.as_deref()),
        Command::Defend { scenario, out } => commands::defend(&scenario, out.as_deref()),
        Command::Metrics { what, out } => commands::metrics(&what, out.as_deref()),
        Command::Reproduce(args) => commands::reproduce(&args),
        Command::Validate { path, kind } => commands::validate(&path, kind),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(msg) => {
            if !msg.is_empty() {
                println!("{msg}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
