use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A numeric input outside the domain of the operation (non-finite,
    /// nonpositive price, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed call: wrong lengths, unknown expert, out-of-range epoch.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Operation called before the state it depends on exists.
    #[error("invalid state: {0}")]
    State(String),

    /// A computation would exceed a configured size cap.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Input data rejected, with the 1-based line it came from.
    #[error("line {line}: {message}")]
    Data { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
