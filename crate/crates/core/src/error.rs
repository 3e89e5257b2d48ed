use thiserror::Error;

/// Errors raised by the numerical laboratory.
///
/// `Integrity` is reserved for violations of exact identities or theorems:
/// those indicate a solver or implementation defect, never statistical noise.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("distribution `{0}` has no density")]
    NoDensity(&'static str),
    #[error("graph is disconnected ({reached} of {total} vertices reachable)")]
    Disconnected { reached: usize, total: usize },
    #[error("solver breakdown: {0}")]
    SolverBreakdown(String),
    #[error("integrity violation in {check}: {detail}")]
    Integrity { check: String, detail: String },
    #[error("empty sphere at radius {0}")]
    EmptySphere(usize),
    #[error("insufficient data: {0}")]
    Insufficient(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn integrity(check: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Integrity {
            check: check.into(),
            detail: detail.into(),
        }
    }

    pub fn is_integrity(&self) -> bool {
        matches!(self, Error::Integrity { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
