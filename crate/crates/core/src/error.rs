use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the numerical core and the command-line layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("integration failure: {0}")]
    Integration(String),

    #[error("root bracket not found: {0}")]
    Bracket(String),

    #[error("shock proximity at x={x}: max |y_t| = {grad:.3e} exceeds guard {guard:.3e}")]
    ShockProximity { x: f64, grad: f64, guard: f64 },

    #[error("pressure lost positivity at x={x}")]
    Positivity { x: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("resonant profile: k={k}, divisor j={j} has |delta|={residual:.3e}")]
    Resonant { k: usize, j: usize, residual: f64 },

    #[error("newton solve failed at alpha={alpha:.3e}: {reason}")]
    Newton { alpha: f64, reason: String },

    #[error("boundary residual {residual:.3e} exceeds {tol:.3e}")]
    BoundaryResidual { residual: f64, tol: f64 },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("usage: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Resonant { .. } => 3,
            Error::Io { .. } | Error::Parse { .. } | Error::Usage(_) | Error::InvalidProfile(_) => {
                2
            }
            _ => 1,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InvalidProfile(_) => "invalid_profile",
            Error::Integration(_) => "integration",
            Error::Bracket(_) => "bracket",
            Error::ShockProximity { .. } => "shock_proximity",
            Error::Positivity { .. } => "positivity",
            Error::NonFinite(_) => "non_finite",
            Error::Resonant { .. } => "resonant",
            Error::Newton { .. } => "newton",
            Error::BoundaryResidual { .. } => "boundary_residual",
            Error::Verification(_) => "verification",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Usage(_) => "usage",
        }
    }

    pub fn path(&self) -> Option<&std::path::Path> {
        match self {
            Error::Io { path, .. } | Error::Parse { path, .. } => Some(path),
            _ => None,
        }
    }
}
