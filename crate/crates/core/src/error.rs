use thiserror::Error;

/// Errors raised by the simulation and estimation chain.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration violates one of its invariants.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Inputs with inconsistent shapes were combined.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A numerical routine did not converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The estimator could not produce an estimate.
    #[error("estimation failed: {0}")]
    Estimation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
