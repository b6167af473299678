use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    InvalidParameter { what: &'static str, reason: String },

    #[error("{transform} transform domain violation at {value}")]
    Domain { transform: &'static str, value: f64 },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("support violation: base prior density is zero at draw {row} ({param} = {value})")]
    SupportViolation { param: String, row: usize, value: f64 },

    #[error("disjoint support: alternative prior is zero at every draw of `{0}`")]
    DisjointSupport(String),

    #[error("non-finite draw in column `{column}` at row {row}")]
    NonFiniteDraw { column: String, row: usize },

    #[error("initialization failed: non-finite log density (parameter `{param}`)")]
    Initialization { param: String },

    #[error("non-finite log-likelihood at record {index}")]
    NonFiniteLikelihood { index: usize },

    #[error("no sign change in bracket [{lo}, {hi}]: Q-theta0 = {f_lo} and {f_hi}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("refit bracket [{lo}, {hi}] has no sign change; widen the refinement window")]
    RefitBracket { lo: f64, hi: f64 },

    #[error("at psi = {psi}: {source}")]
    AtPsi {
        psi: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { what, reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter { .. } | Error::UnknownParameter(_) => 2,
            Error::Parse { .. } | Error::Io { .. } => 3,
            Error::NoSignChange { .. } | Error::RefitBracket { .. } => 5,
            Error::AtPsi { source, .. } => source.exit_code(),
            _ => 4,
        }
    }
}
