use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Raised when an enumeration would exceed the configured cap; callers are
    /// expected to fall back to solving on demand.
    #[error("enumeration of {count} symbol vectors exceeds the cap of {cap}")]
    Capacity { count: u128, cap: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The block-level fixed point did not reach the spread tolerance.
    #[error("SINR balancing did not converge: spread {spread:.3e} after {iterations} iterations")]
    BlpNotConverged {
        spread: f64,
        iterations: usize,
        last: Box<crate::blp::BlpSolution>,
    },

    #[error("degenerate dual state: {0}")]
    Degenerate(String),

    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error("oracle inconclusive: {0}")]
    OracleInconclusive(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precoder design failed for group {group}, symbol index {index}: {source}")]
    Table {
        group: usize,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
