use thiserror::Error;
use vpb_core::VpbError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Core(#[from] VpbError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0} invariant check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    /// 2 for anything wrong with the configuration, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Config { .. } => 2,
            _ => 1,
        }
    }
}
