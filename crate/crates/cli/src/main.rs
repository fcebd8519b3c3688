use std::path::PathBuf;
use std::process::ExitCode;

use afm_cli::{load_config, run, CliError, Task};
use clap::Parser;

/// Approximately-finite-memory analysis: memory horizons, stability
/// certificates, bounds and TCN fits from a JSON config.
#[derive(Debug, Parser)]
#[command(name = "afm", version)]
struct Args {
    task: Task,
    /// Experiment config (a single JSON document).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.json and CSV tables; without it the
    /// report goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("AFM_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::ConfigInvalid {
                path: "AFM_THREADS".into(),
                reason: format!("expected a positive integer, got `{v}`"),
            }),
        },
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("afm: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match threads_from_env() {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("afm: could not size the thread pool: {e}");
            }
        }
        Ok(None) => {}
        Err(e) => return fail(&e),
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            return fail(&CliError::ConfigInvalid { path: args.config.display().to_string(), reason: e.to_string() })
        }
    };
    let cfg = match load_config(&text, args.task, args.seed, args.out) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let outcome = run(args.task, &cfg);
    match &cfg.out {
        Some(dir) => {
            if let Err(e) = outcome.report.write(dir, &outcome.tables) {
                return fail(&e);
            }
        }
        None => println!("{}", outcome.report.to_json()),
    }
    match &outcome.error {
        Some(e) => fail(e),
        None => ExitCode::SUCCESS,
    }
}
