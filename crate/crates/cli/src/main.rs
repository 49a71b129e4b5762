use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use heatfk_cli::{run, ExperimentConfig, RunOptions, Subcommand};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Solve,
    Picard,
    Fk,
    Mollify,
    Malliavin,
    Density,
    Holder,
    KernelCheck,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Solve => Subcommand::Solve,
            Command::Picard => Subcommand::Picard,
            Command::Fk => Subcommand::Fk,
            Command::Mollify => Subcommand::Mollify,
            Command::Malliavin => Subcommand::Malliavin,
            Command::Density => Subcommand::Density,
            Command::Holder => Subcommand::Holder,
            Command::KernelCheck => Subcommand::KernelCheck,
        }
    }
}

/// Stochastic heat equation experiments: grid solver, Feynman-Kac Monte
/// Carlo, Malliavin diagnostics and Hölder regression.
#[derive(Debug, Parser)]
#[command(name = "heatfk", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output root; artifacts go to `<out>/<subcommand>/`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Exit with status 1 if any verdict fails.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match ExperimentConfig::from_path(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions { out: cli.out, seed: cli.seed, threads: cli.threads };
    match run(cli.command.into(), &config, &opts) {
        Ok(outcome) => {
            for v in &outcome.verdicts {
                let mark = if v.pass { "pass" } else { "FAIL" };
                println!(
                    "{mark} {}: measured {:e}, expected {:e}, tolerance {:e}",
                    v.name, v.measured, v.expected, v.tolerance
                );
            }
            println!("artifacts in {}", outcome.dir.display());
            if cli.check && !outcome.all_pass() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
