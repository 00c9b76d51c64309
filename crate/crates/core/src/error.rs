use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for a system of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("m = {m} out of range (allowed {min}..={max})")]
    TermCountOutOfRange { m: usize, min: usize, max: usize },

    #[error("invalid norm: {0}")]
    InvalidNorm(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid example spec: {0}")]
    InvalidSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation requires a nonzero vector")]
    ZeroVector,

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("enumeration of {count} candidates exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("simplex pivot guard tripped after {0} pivots")]
    CyclingGuard(usize),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("set is not a weak thresholding set: {0}")]
    NotCertified(String),

    #[error("cardinality mismatch: {0}")]
    CardinalityMismatch(String),

    #[error("every ratio had a vanishing denominator; nothing to estimate")]
    AllRatiosSkipped,

    #[error("selector `{name}` violates {axiom}: {detail}")]
    SelectorRejected {
        name: String,
        axiom: &'static str,
        detail: String,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
