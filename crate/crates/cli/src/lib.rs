//! Config-driven experiment runner for `afm-core`.
//!
//! A run reads one JSON config, dispatches a task, and produces a
//! [`RunReport`] plus CSV tables. Results depend only on the config (seed
//! included), never on the number of worker threads.

pub mod config;
pub mod error;
pub mod report;
pub mod tasks;

use std::path::PathBuf;
use std::time::Instant;

pub use config::{ExperimentConfig, Task};
pub use error::CliError;
pub use report::{RunReport, Table};

/// A finished run. `error` is set when the task failed; the report then
/// carries the error verbatim and empty results.
pub struct RunOutcome {
    pub report: RunReport,
    pub tables: Vec<Table>,
    pub error: Option<CliError>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(0, CliError::exit_code)
    }
}

/// Reads and validates a config, applying command-line overrides.
pub fn load_config(
    text: &str,
    task: Task,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::from_json(text)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    if out.is_some() {
        cfg.out = out;
    }
    cfg.validate(task)?;
    cfg.task = Some(task);
    Ok(cfg)
}

/// Runs `task` on an already validated config.
pub fn run(task: Task, cfg: &ExperimentConfig) -> RunOutcome {
    let start = Instant::now();
    let (output, error) = match tasks::run_task(task, cfg) {
        Ok(out) => (out, None),
        Err(e) => (report::TaskOutput::default(), Some(e)),
    };
    let report = RunReport {
        task: task.name().to_string(),
        status: if error.is_none() { "ok" } else { "failed" },
        config: cfg.clone(),
        results: output.results,
        witnesses: output.witnesses,
        error: error.as_ref().map(|e| report::ErrorReport { kind: e.kind(), message: e.to_string() }),
        tables: output.tables.iter().map(Table::file_name).collect(),
        threads: rayon::current_num_threads(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        versions: report::Versions::default(),
    };
    RunOutcome { report, tables: output.tables, error }
}
