use thiserror::Error;

/// Errors surfaced by dataset, model, and pipeline operations.
///
/// Solver non-convergence is not an error: it is reported in
/// [`crate::sqp::SolveStatus`] so callers can triage per problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} in {path}: {detail}")]
    Format {
        what: &'static str,
        path: String,
        detail: String,
    },

    #[error("{0}")]
    Invalid(String),

    #[error("refusing to overwrite existing output {0} (pass overwrite to allow)")]
    WouldOverwrite(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
