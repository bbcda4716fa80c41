use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flexsim_cli::{cmd_partition_inspect, cmd_run};

#[derive(Parser)]
#[command(name = "flexsim", version, about = "Run federated-learning simulations from a config file")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write metrics.csv, final_params.txt and resolved_config.toml.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replaces both the partition seed and the round seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Partition utilities.
    Partition {
        #[command(subcommand)]
        command: PartitionCommand,
    },
}

#[derive(Subcommand)]
enum PartitionCommand {
    /// Write per-node class counts of the configured split as CSV.
    Inspect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed } => cmd_run(&config, &out, seed).map(|_| ()),
        Command::Partition {
            command: PartitionCommand::Inspect { config, out },
        } => cmd_partition_inspect(&config, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
