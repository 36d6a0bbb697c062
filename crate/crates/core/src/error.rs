use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numeric,
    Invariant,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("could not parse `{input}`: {reason}")]
    Parse { input: String, reason: String },

    #[error("quadrature did not converge: estimated error {achieved:e} exceeds tolerance {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("atomic measure has no density; sampling it requires allow_atomic")]
    AtomicMeasure,

    #[error("invalid chain state: target density vanishes at x = {0}")]
    InvalidState(f64),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("degenerate chain: zero sample variance")]
    DegenerateChain,

    #[error("design failed: {0}")]
    Design(String),

    #[error("infinite roughness: {0}")]
    InfiniteRoughness(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parameter(_) | Error::Parse { .. } | Error::Contract(_) | Error::AtomicMeasure | Error::Io(_) => {
                ErrorClass::Config
            }
            Error::Quadrature { .. }
            | Error::InvalidState(_)
            | Error::DegenerateChain
            | Error::Design(_)
            | Error::InfiniteRoughness(_) => ErrorClass::Numeric,
            Error::Consistency(_) | Error::Invariant(_) => ErrorClass::Invariant,
        }
    }

    /// Short stable identifier for machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Parse { .. } => "parse",
            Error::Quadrature { .. } => "quadrature",
            Error::Consistency(_) => "consistency",
            Error::AtomicMeasure => "atomic_measure",
            Error::InvalidState(_) => "invalid_state",
            Error::Contract(_) => "contract",
            Error::DegenerateChain => "degenerate_chain",
            Error::Design(_) => "design",
            Error::InfiniteRoughness(_) => "infinite_roughness",
            Error::Invariant(_) => "invariant",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
