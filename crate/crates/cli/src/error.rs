use shiftfunc_core::{Error, ErrorClass};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2: configuration, 3: capability/validation, 4: numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Capability => 3,
                ErrorClass::Numerical => 4,
            },
        }
    }
}
