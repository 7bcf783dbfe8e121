//! Error type shared across the core crate.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by core operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreError {
    /// A tensor shape or dimension constraint was violated.
    InvalidShape(String),
    /// An operation contract was violated (non-scalar loss, empty clip,
    /// mismatched pass lengths, non-deterministic objective, ...).
    Contract(String),
    /// Synthetic data generation could not satisfy its configuration.
    Generation(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidShape(msg) => write!(f, "invalid shape: {msg}"),
            CoreError::Contract(msg) => write!(f, "contract violation: {msg}"),
            CoreError::Generation(msg) => write!(f, "generation error: {msg}"),
        }
    }
}

impl core::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;
