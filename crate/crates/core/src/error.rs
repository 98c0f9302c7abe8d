use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),

    #[error("non-finite result in {0}; parameters overflow the working precision")]
    NonFinite(&'static str),

    #[error("quadrature failed to reach tolerance: estimated error {error:e} for value {value:e}")]
    Quadrature { value: f64, error: f64 },

    #[error("root refinement failed: residual {residual:e} above tolerance {tol:e}")]
    Refinement { residual: f64, tol: f64 },

    #[error("enumeration guard: {count} components exceeds the limit of {limit}")]
    EnumerationGuard { count: u128, limit: u128 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),
}

pub type Result<T> = std::result::Result<T, Error>;
