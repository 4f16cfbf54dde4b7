//! File formats and the command-line driver for `lob-core`.
//!
//! - [`scenario`]: TOML scenario files.
//! - [`log`]: the JSON Lines event log.
//! - [`report`]: dispatch, settlement and price CSVs.
//! - [`snapshot`]: book snapshots rebuilt from a log.
//!
//! The `cmd_*` functions back the `lob` binary's subcommands.

pub mod log;
pub mod report;
pub mod scenario;
pub mod snapshot;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use lob_core::agents::Agent;
use lob_core::engine::{replay, Engine, EngineError, ReplayVerdict, RunOutput};
use lob_core::Time;
use thiserror::Error;

use crate::scenario::{Overrides, Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or missing input; exit status 2.
    #[error("{0}")]
    Input(String),
    /// Failure while running; exit status 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Input(e.to_string())
    }
}

/// Runs a loaded scenario to completion.
pub fn run_scenario(s: &Scenario) -> Result<RunOutput, EngineError> {
    let agents = s
        .agents
        .iter()
        .map(|spec| Agent::new(spec.clone()).expect("validated when the scenario was built"))
        .collect();
    let mut engine = Engine::with_agents(s.config, agents)?;
    engine.push_inputs(s.inputs.iter().cloned())?;
    Ok(engine.finish())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub events: usize,
    pub rounds: usize,
    pub transactions: usize,
}

fn write_file(
    dir: &Path,
    name: &str,
    f: impl FnOnce(BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let path = dir.join(name);
    let file = File::create(&path)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
    f(BufWriter::new(file))
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// `lob run`: writes `events.jsonl`, `dispatches.csv`, `settlement.csv`
/// and `prices.csv` into `out`.
pub fn cmd_run(config: &Path, out: &Path, overrides: &Overrides) -> Result<RunSummary, CliError> {
    let scenario = Scenario::load(config, overrides)?;
    let output = run_scenario(&scenario).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::create_dir_all(out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    let tick = scenario.config.tick_size;
    write_file(out, "events.jsonl", |w| {
        log::write_events(w, &output.events)
    })?;
    write_file(out, "dispatches.csv", |w| {
        report::write_dispatches(w, &output.events, &tick)
    })?;
    write_file(out, "settlement.csv", |w| {
        report::write_settlements(w, &output.settlements, &tick)
    })?;
    write_file(out, "prices.csv", |w| {
        report::write_prices(w, &output.events, &tick)
    })?;
    Ok(RunSummary {
        events: output.events.len(),
        rounds: output.dispatches.len(),
        transactions: output.dispatches.iter().map(|d| d.transactions.len()).sum(),
    })
}

pub fn load_log(path: &Path) -> Result<log::EventLog, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    log::read_events(BufReader::new(file))
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// `lob replay`: succeeds only if the log re-runs to exactly itself.
pub fn cmd_replay(path: &Path) -> Result<String, CliError> {
    let log = load_log(path)?;
    match replay(&log.events) {
        ReplayVerdict::Verified => Ok(format!("verified {} events", log.events.len())),
        ReplayVerdict::Diverged { index } => {
            Err(CliError::Runtime(format!("diverged at event {index}")))
        }
        ReplayVerdict::Truncated { verified } => Err(CliError::Runtime(format!(
            "log is truncated after {verified} matching events{}",
            if log.torn_tail {
                " (last line torn)"
            } else {
                ""
            }
        ))),
    }
}

/// `lob inspect`: the book at time `at` in tabular form.
pub fn cmd_inspect(path: &Path, at: u64) -> Result<String, CliError> {
    let log = load_log(path)?;
    let snap =
        snapshot::book_at(&log.events, Time(at)).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(snap.render())
}
