//! Deterministic sparse pattern matching: constellation search, partial
//! convolutions through derivative circuits, point pattern matching, sparse
//! wildcard matching, and per-element 3SUM counting.

pub mod circuit;
pub mod conv;
pub mod error;
pub mod field;
pub mod support;
pub mod vandermonde;

pub use error::{Error, Result};
