use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("state error: {0}")]
    State(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("search error: {0}")]
    Search(String),
    #[error("convergence error: {0}")]
    Convergence(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code class: 1 for input/validation problems,
    /// 2 for runtime, search and convergence failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::Validation(_)
            | Error::Config(_)
            | Error::State(_)
            | Error::Parse { .. } => 1,
            Error::Search(_) | Error::Convergence(_) | Error::Singular(_) | Error::Io(_) => 2,
        }
    }
}
