use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid geometry, layout or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller violated an operation's preconditions (shapes, fingerprints, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("assembly error in element {element}: {reason}")]
    Assembly { element: usize, reason: String },

    /// Factorization breakdown, residual check failure or a degenerate fit.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at {location}: {reason}")]
    Parse { location: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for failures the CLI reports with the "numerical failure" exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Assembly { .. })
    }
}
