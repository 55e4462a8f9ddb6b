//! Crate-wide error type.
//!
//! Numerical code fails in a small number of ways — mismatched shapes,
//! impossible configurations, degenerate geometry — and the dataset layer adds
//! I/O and integrity failures. One enum covers all of them so every fallible
//! function in the crate returns the same [`Result`].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration value is out of its legal range (e.g. channel count
    /// not divisible by the shift group count).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Degenerate geometric input (zero-perimeter polygon, empty box, ...).
    #[error("degenerate geometry: {0}")]
    Geometry(String),

    /// A dataset file failed its checksum or structural validation.
    #[error("corrupt dataset file {file}: {reason}")]
    Corrupt { file: String, reason: String },

    /// A dataset file could not be parsed.
    #[error("cannot parse {file}: {reason}")]
    Parse { file: String, reason: String },

    /// Scene generation could not satisfy a placement constraint.
    #[error("scene placement failed: {0}")]
    Placement(String),

    /// Training produced a non-finite loss; `term` names the offending part.
    #[error("non-finite loss term `{term}` at step {step}")]
    NonFinite { term: &'static str, step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shortcut for shape errors built from format strings.
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }
}
