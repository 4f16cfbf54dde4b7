use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lob_core::ResidualMode;
use lob_sim::scenario::Overrides;
use lob_sim::{cmd_inspect, cmd_replay, cmd_run, CliError};

/// Limit order book market simulator.
#[derive(Debug, Parser)]
#[command(name = "lob", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ResidualArg {
    Deferred,
    Immediate,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its event log and CSV outputs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `market.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `market.residual_mode`.
        #[arg(long, value_enum)]
        residual_mode: Option<ResidualArg>,
        /// Per-kWh tariff, overriding `tariff.per_kwh`.
        #[arg(long)]
        tariff: Option<String>,
    },
    /// Re-run a log and check it reproduces itself.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Print the book at a time (seconds) from a log.
    Inspect {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        at: u64,
    },
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            residual_mode,
            tariff,
        } => {
            let overrides = Overrides {
                seed,
                residual_mode: residual_mode.map(|m| match m {
                    ResidualArg::Deferred => ResidualMode::Deferred,
                    ResidualArg::Immediate => ResidualMode::Immediate,
                }),
                tariff_per_kwh: tariff,
            };
            let s = cmd_run(&config, &out, &overrides)?;
            Ok(format!(
                "{} events, {} rounds, {} transactions written to {}",
                s.events,
                s.rounds,
                s.transactions,
                out.display()
            ))
        }
        Command::Replay { log } => cmd_replay(&log),
        Command::Inspect { log, at } => cmd_inspect(&log, at),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(msg) => {
            println!("{}", msg.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
