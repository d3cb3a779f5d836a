use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data violates a structural requirement (closure, primitivity, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// An exact integer computation left the supported width.
    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),

    #[error("modulus mismatch: {left} vs {right}")]
    ModulusMismatch { left: u32, right: u32 },

    /// A first-return search gave up before re-entering the subset.
    #[error("first return not reached within {steps} steps (partial time {partial_time})")]
    Truncated { steps: u64, partial_time: f64 },

    /// Too many Monte Carlo orbits hit the step cap for the estimate to be trusted.
    #[error("{truncated} of {samples} orbits truncated, above the tolerated rate")]
    TruncationBudget { truncated: u64, samples: u64 },

    #[error("parse error: {0}")]
    Parse(String),

    /// A statistic was requested from an empty sample.
    #[error("empty sample: {0}")]
    Empty(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
