use thiserror::Error;

/// Failures of a run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid experiment spec: {0}")]
    Schema(String),
    #[error("run failed: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => exit::SCHEMA,
            CliError::Runtime(_) => exit::RUNTIME,
        }
    }
}

pub mod exit {
    pub const OK: i32 = 0;
    pub const TOLERANCE: i32 = 1;
    pub const SCHEMA: i32 = 2;
    pub const RUNTIME: i32 = 3;
}

/// Core errors caused by bad input are schema errors; the rest are runtime failures.
impl From<superlab_core::Error> for CliError {
    fn from(e: superlab_core::Error) -> Self {
        use superlab_core::Error as E;
        match e {
            E::Invalid(_) | E::Dimension { .. } | E::Reducible(_) | E::Unnormalized(_) | E::Json(_) => {
                CliError::Schema(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
