//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received an argument outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two containers that must agree in length do not.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// An operation that needs samples received an empty chain.
    #[error("empty chain passed to {0}")]
    EmptyChain(&'static str),

    /// A chain is too short for the requested statistic.
    #[error("chain of length {len} too short for {what}")]
    ChainTooShort { what: &'static str, len: usize },

    /// The sampler configuration does not produce a whole number of
    /// retained samples.
    #[error("chain plan invalid: {0}")]
    ChainPlan(String),

    /// Density estimation produced a zero prior density where a ratio is
    /// required.
    #[error("prior density vanished at the evaluation point")]
    ZeroPriorDensity,

    /// The search for the number of supportable accuracies walked past its
    /// hard bound without the comparison statistic accepting.
    #[error("accuracy-count search exceeded bound {bound} (last max|C| = {last_c:.3})")]
    SearchExhausted { bound: usize, last_c: f64 },
}
