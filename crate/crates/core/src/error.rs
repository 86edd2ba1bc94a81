//! Error type shared by all pipeline stages.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// A configuration value violates an invariant (non-positive timing,
    /// odd row count for a dual shutter, out-of-bounds scene spec, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Array dimensions are inconsistent between two pipeline stages.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A numerical operation failed (diverging solver, degenerate input).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// File contents do not match the expected container layout.
    #[error("bad file format: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, CoreError>;
