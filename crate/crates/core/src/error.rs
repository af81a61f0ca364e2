use thiserror::Error;

/// Coarse error class, used by front ends to pick exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Capability,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("unsupported norm: {0}")]
    UnsupportedNorm(String),
    #[error("effective rank undefined for zero covariance")]
    UndefinedRank,
    #[error("functional `{functional}` does not provide {capability}")]
    MissingCapability {
        functional: String,
        capability: String,
    },
    #[error("degenerate functional: {0}")]
    DegenerateFunctional(String),
    #[error("chain order exceeds cap: {order} > {cap}")]
    ChainOrderCap { order: usize, cap: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("packing construction failed: {0}")]
    Packing(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) | Error::UnsupportedNorm(_) => ErrorClass::Config,
            Error::Numerical(_) | Error::Packing(_) => ErrorClass::Numerical,
            _ => ErrorClass::Capability,
        }
    }

    pub(crate) fn missing(functional: &str, capability: impl Into<String>) -> Self {
        Error::MissingCapability {
            functional: functional.to_string(),
            capability: capability.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
