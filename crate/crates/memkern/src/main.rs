use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "memkern",
    version,
    about = "Exact memory-kernel master equations: run scenarios, compare solution routes, certify CPTP dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every requested route; write trajectories, the comparison
    /// matrix and a run manifest
    Run { config: PathBuf },
    /// Comparison matrix and manifest only, no trajectory files
    Compare { config: PathBuf },
    /// Schema and invariant checks, no execution
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => memkern::cli::run(&config),
        Command::Compare { config } => memkern::cli::compare(&config),
        Command::Validate { config } => memkern::cli::validate(&config),
    };
    ExitCode::from(code as u8)
}
