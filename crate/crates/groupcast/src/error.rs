//! Crate-wide error type.

/// Errors produced by any of the numerical or combinatorial routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A matrix expected to be full rank is (numerically) rank deficient.
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// A Cholesky pivot was non-positive or the input was not Hermitian.
    #[error("not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// Inconsistent or unsupported dimensions.
    #[error("bad dimensions: {0}")]
    BadDimensions(String),

    /// A channel file could not be parsed.
    #[error("parse error: {0}")]
    ParseError(String),

    /// A grouping violates the partition invariants.
    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),

    /// An enumeration would exceed the caller-supplied budget.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// A fixed power vector does not sum to the stated total.
    #[error("power mismatch: {0}")]
    PowerMismatch(String),

    /// Waterfilling was asked to allocate over an empty gain vector.
    #[error("empty gains")]
    EmptyGains,

    /// An argument is outside the mathematical domain of the function.
    #[error("domain error: {0}")]
    DomainError(String),

    /// Not enough samples to estimate the requested quantile.
    #[error("too few samples: {0}")]
    TooFewSamples(String),

    /// A Gram-inverse cache was used with a channel it was not built from.
    #[error("stale cache: {0}")]
    StaleCache(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
