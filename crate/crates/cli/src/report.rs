//! Run reports and CSV tables.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Anything printable as a CSV cell; `None` prints as an empty cell.
pub trait Cell {
    fn cell(&self) -> String;
}

macro_rules! display_cell {
    ($($t:ty),*) => {$(
        impl Cell for $t {
            fn cell(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
display_cell!(f64, usize, u64, bool, String, &str);

impl<T: Cell> Cell for Option<T> {
    fn cell(&self) -> String {
        self.as_ref().map(Cell::cell).unwrap_or_default()
    }
}

/// A plot-ready table: labelled columns, one row per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TaskOutput {
    pub results: Value,
    pub witnesses: Value,
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub afm_cli: &'static str,
    pub afm_core: &'static str,
}

impl Default for Versions {
    fn default() -> Self {
        Self { afm_cli: env!("CARGO_PKG_VERSION"), afm_core: afm_core::VERSION }
    }
}

/// Everything needed to replay a run sits in `config`; `results` depends
/// only on the config, never on timing or thread count.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub task: String,
    pub status: &'static str,
    pub config: ExperimentConfig,
    pub results: Value,
    pub witnesses: Value,
    pub error: Option<ErrorReport>,
    pub tables: Vec<String>,
    pub threads: usize,
    pub wall_time_secs: f64,
    pub versions: Versions,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `report.json` and every table into `dir`.
    pub fn write(&self, dir: &Path, tables: &[Table]) -> Result<(), CliError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| CliError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        for t in tables {
            let path = dir.join(t.file_name());
            std::fs::write(&path, t.to_csv()).map_err(io(&path))?;
        }
        let path = dir.join("report.json");
        std::fs::write(&path, self.to_json()).map_err(io(&path))
    }
}
