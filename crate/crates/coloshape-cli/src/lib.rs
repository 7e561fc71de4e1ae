//! Command-line pipeline around the coloshape library: simulate phantom
//! data, train per-marker forests, estimate colon shapes, and evaluate
//! leave-one-insertion-out.

pub mod commands;
pub mod config;
pub mod eval;
pub mod pipeline;

/// Command-level errors, mapped to distinct exit codes in `main`.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration (file, flags, or simulator parameters).
    Config(String),
    Core(coloshape::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<coloshape::Error> for CliError {
    fn from(e: coloshape::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    /// Exit code: 2 configuration, 3 data-file parsing, 4 numeric
    /// degeneracy, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                coloshape::Error::Parse { .. }
                | coloshape::Error::UnsupportedVersion { .. }
                | coloshape::Error::StructuralIntegrity(_) => 3,
                coloshape::Error::DegenerateGeometry { .. } => 4,
                _ => 1,
            },
        }
    }
}
