use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config at `{path}`: {reason}")]
    ConfigInvalid { path: String, reason: String },

    #[error(transparent)]
    Task(#[from] afm_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// Process exit code: 2 for config problems, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid { .. } => 2,
            CliError::Task(_) | CliError::Io { .. } => 3,
        }
    }

    /// Short machine-readable kind, e.g. `AssumptionFailed`.
    pub fn kind(&self) -> String {
        match self {
            CliError::ConfigInvalid { .. } => "ConfigInvalid".into(),
            CliError::Io { .. } => "Io".into(),
            CliError::Task(e) => {
                let dbg = format!("{e:?}");
                dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string()
            }
        }
    }
}
