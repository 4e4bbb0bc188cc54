use thiserror::Error;

use crate::l1::L1Fit;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The least-squares system could not be solved even with the
    /// minimum-norm fallback (non-finite inputs).
    #[error("least-squares system is singular and the fallback produced non-finite coefficients")]
    SingularSystem,

    #[error("selection size {k} outside [1, {len}]")]
    BadK { k: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid solver configuration: {0}")]
    BadConfig(String),

    #[error("invalid instance specification: {0}")]
    BadSpec(String),

    #[error("exact enumeration needs {subsets} subsets, cap is {cap}")]
    BudgetExceeded { subsets: u128, cap: u128 },

    #[error("missing spectrum report: {0}")]
    MissingReport(String),

    /// The L1 baseline hit its iteration cap. The best iterate is attached.
    #[error("L1 solver did not converge after {} iterations", .0.iters)]
    NotConverged(Box<L1Fit>),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
