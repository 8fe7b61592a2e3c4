use crate::circuit::Label;
use thiserror::Error;

/// Errors shared across the engine.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("division or inversion of zero field element")]
    DivisionByZero,
    #[error("polynomial is not irreducible over F_{p}")]
    NotIrreducible { p: u64 },
    #[error("large-order construction failed: {0}")]
    ConstructionFailed(String),
    #[error("order unverifiable at this scale: {0}")]
    Unverifiable(String),
    #[error("order certificate too weak: have >= {have}, need {need}")]
    OrderTooWeak { have: u128, need: u128 },
    #[error("circuit is not linear at gate {gate}: {reason}")]
    NotLinear { gate: usize, reason: String },
    #[error("division by zero while evaluating gate {gate}")]
    EvalDivByZero { gate: usize },
    #[error("unknown label {0:?}")]
    UnknownLabel(Label),
    #[error("assignment missing input {0:?}")]
    MissingInput(Label),
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("superset does not cover required differences (first miss: {missing})")]
    SupersetViolation { missing: i64 },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
