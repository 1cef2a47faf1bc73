//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Geometry too degenerate to operate on (zero-area face, zero vector, ...).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// Dimension or index mismatch between related containers.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Malformed input stream; `location` is a byte offset or line number.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// Stream does not start with the expected magic bytes.
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    /// Model file with an unknown version tag or corrupted header.
    #[error("unsupported model version: {0}")]
    UnsupportedVersion(String),

    /// Point-location failed even after the exhaustive fallback scan.
    #[error("mesh is not closed: {0}")]
    MeshNotClosed(String),

    /// A non-finite value surfaced in a numeric pipeline.
    #[error("numeric fault: {0}")]
    NumericFault(String),

    /// Rotation parameters outside the domain of the parametrization.
    #[error("degenerate parameters: {0}")]
    DegenerateParameter(String),

    /// Regression target has zero variance.
    #[error("undefined regression: {0}")]
    UndefinedRegression(String),

    /// Correlation of a zero-variance vector.
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    /// Configuration violates a documented precondition.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
