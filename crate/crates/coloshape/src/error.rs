//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by coloshape operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition (mismatched lengths,
    /// non-finite coordinates, bad parameter values, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The point configuration does not determine a rigid transform
    /// (coincident or collinear points). `iteration` is set when the
    /// degeneracy was hit inside an ICP loop.
    #[error("degenerate geometry{}: {detail}", iteration.map(|k| format!(" at ICP iteration {k}")).unwrap_or_default())]
    DegenerateGeometry {
        detail: String,
        iteration: Option<usize>,
    },

    /// A data file did not parse. `line` is 1-based.
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    /// A data file declares a format version this build does not read.
    #[error("unsupported {kind} format version {found} (supported: {supported})")]
    UnsupportedVersion {
        kind: &'static str,
        found: String,
        supported: u32,
    },

    /// A model file parsed but does not reconstruct a valid forest.
    #[error("model structure corrupt: {0}")]
    StructuralIntegrity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn degenerate(detail: impl Into<String>) -> Self {
        Error::DegenerateGeometry {
            detail: detail.into(),
            iteration: None,
        }
    }

    /// Attach an ICP iteration index to a degeneracy error, leaving other
    /// variants untouched.
    pub fn at_iteration(self, iteration: usize) -> Self {
        match self {
            Error::DegenerateGeometry { detail, .. } => Error::DegenerateGeometry {
                detail,
                iteration: Some(iteration),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
