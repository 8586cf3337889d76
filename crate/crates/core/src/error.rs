use thiserror::Error;

/// Errors raised by the field, matrix, channel and capacity layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("{0} is not a prime power")]
    NotPrimePower(u64),
    #[error("modulus is reducible over F_{0}")]
    ReducibleModulus(u32),
    #[error("invalid modulus: {0}")]
    InvalidModulus(String),
    #[error("field order {order} exceeds the supported maximum {max}")]
    FieldTooLarge { order: u64, max: u64 },
    #[error("inverse of zero")]
    ZeroInverse,
    #[error("element {value} is outside the field of order {order}")]
    ElementOutOfRange { value: u64, order: u32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("operands are over different fields")]
    FieldMismatch,
    #[error("rank {k} out of range 0..={max}")]
    RankOutOfRange { k: usize, max: usize },
    #[error("ambient dimension mismatch ({0} vs {1})")]
    AmbientMismatch(usize, usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("enumeration needs {required} steps, budget is {limit}")]
    BudgetExceeded { required: String, limit: u64 },
    #[error("optimizer stopped after {iterations} iterations with gap {gap:e}")]
    NonConvergence { iterations: usize, gap: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
