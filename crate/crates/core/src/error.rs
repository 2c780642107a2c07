//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A bit string or per-stage list has the wrong length for the setup.
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A bit value outside {0, 1}.
    #[error("invalid bit value {value}; bits must be 0 or 1")]
    InvalidBit { value: u8 },

    /// A physical parameter outside its admissible range.
    #[error("invalid {what}: {value} (must satisfy {constraint})")]
    InvalidParameter {
        what: &'static str,
        value: f64,
        constraint: &'static str,
    },

    /// The experiment configuration failed validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A state handed to the return-pass propagator occupies a time bin that
    /// no forward path x can produce, so its path label cannot be recovered.
    #[error("state is not a modulated forward state: bin {bin} is not of the form sum(x_l * delta_l)")]
    NotForwardShaped { bin: i64 },

    /// Truth-table text that does not follow the `n=<int>` + bit-row format.
    #[error("truth table parse error at line {line}: {reason}")]
    TruthTableFormat { line: usize, reason: String },

    /// Oracle defined for a different number of inputs than the setup.
    #[error("oracle arity mismatch: oracle has n={oracle_n}, setup has n={setup_n}")]
    OracleArity { oracle_n: usize, setup_n: usize },

    /// Every contrast pair for a detection bin had a zero denominator, so no
    /// visibility can be quoted for it.
    #[error("visibility undefined for bin {z}: every contrast pair has zero total counts")]
    DegenerateVisibility { z: String },
}
