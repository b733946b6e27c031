//! `csgnn`: dataset generation, training, robustness sweeps, property
//! verification and certificates.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "csgnn", version, about = "Contractive coupled graph neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a stochastic block model graph.
    GenSbm(CommonArgs),
    /// Train a network and write its metrics and checkpoint.
    Train(CommonArgs),
    /// Train CSGNN and GCN on randomly attacked graphs over several seeds.
    AttackSweep(CommonArgs),
    /// Run the randomized property suites.
    Verify(CommonArgs),
    /// Bound the output distance of a trained network under a perturbation budget.
    Certify(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Key-value config file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random choice of the command.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Config override, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::GenSbm(a) => commands::invocation(a).and_then(|inv| commands::gen_sbm(&inv)),
        Command::Train(a) => commands::invocation(a).and_then(|inv| commands::train(&inv)),
        Command::AttackSweep(a) => commands::invocation(a).and_then(|inv| commands::attack_sweep(&inv)),
        Command::Verify(a) => commands::invocation(a).and_then(|inv| commands::verify(&inv)),
        Command::Certify(a) => commands::invocation(a).and_then(|inv| commands::certify(&inv)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
