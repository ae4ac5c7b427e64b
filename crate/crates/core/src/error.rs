use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("size {n} exceeds the exhaustive-enumeration cap of {cap}")]
    CapExceeded { n: usize, cap: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("policy probability {value} outside (0, 1) at bit {index}")]
    ProbabilityOutOfRange { index: usize, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("not converged: {0}")]
    NotConverged(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) | Error::ProbabilityOutOfRange { .. } | Error::Degenerate(_) => 3,
            Error::NotConverged(_) => 4,
            _ => 2,
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
